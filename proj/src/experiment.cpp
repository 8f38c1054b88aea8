#include "nsync/experiment.hpp"

#include "nsync/gaussian.hpp"
#include "nsync/overlap.hpp"
#include "nsync/parallel.hpp"
#include "nsync/rng.hpp"
#include "nsync/stats.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

namespace nsync {

using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "nsync 1.0.0";

// ---------------------------------------------------------------------------
// Field readers. Every failure names the dotted path of the offending field.

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void allow_keys(const json& obj, const std::string& path, std::set<std::string> keys) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [k, v] : obj.items()) {
    if (!keys.contains(k)) throw ConfigError(join(path, k) + ": unknown field");
  }
}

const json* find(const json& obj, const std::string& key) {
  const auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

double number(const json& obj, const std::string& path, const std::string& key) {
  const json* v = find(obj, key);
  if (!v) throw ConfigError(join(path, key) + ": required field is missing");
  if (!v->is_number()) throw ConfigError(join(path, key) + ": expected a number");
  const double x = v->get<double>();
  if (!std::isfinite(x)) throw ConfigError(join(path, key) + ": must be finite");
  return x;
}

double number_or(const json& obj, const std::string& path, const std::string& key, double dflt) {
  return find(obj, key) ? number(obj, path, key) : dflt;
}

long integer(const json& obj, const std::string& path, const std::string& key) {
  const json* v = find(obj, key);
  if (!v) throw ConfigError(join(path, key) + ": required field is missing");
  if (!v->is_number_integer()) throw ConfigError(join(path, key) + ": expected an integer");
  return v->get<long>();
}

long integer_or(const json& obj, const std::string& path, const std::string& key, long dflt) {
  return find(obj, key) ? integer(obj, path, key) : dflt;
}

std::uint64_t seed_value(const json& obj, const std::string& path, const std::string& key) {
  const json* v = find(obj, key);
  if (!v || !v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                        v->get<long long>() < 0))
    throw ConfigError(join(path, key) + ": expected a nonnegative integer");
  return v->get<std::uint64_t>();
}

std::string text_or(const json& obj, const std::string& path, const std::string& key,
                    const std::string& dflt) {
  const json* v = find(obj, key);
  if (!v) return dflt;
  if (!v->is_string()) throw ConfigError(join(path, key) + ": expected a string");
  return v->get<std::string>();
}

Vector vector_field(const json& obj, const std::string& path, const std::string& key) {
  const json* v = find(obj, key);
  if (!v) throw ConfigError(join(path, key) + ": required field is missing");
  if (!v->is_array() || v->empty()) throw ConfigError(join(path, key) + ": expected a non-empty array");
  Vector out(static_cast<Eigen::Index>(v->size()));
  for (std::size_t k = 0; k < v->size(); ++k) {
    if (!(*v)[k].is_number()) throw ConfigError(join(path, key) + ": entries must be numbers");
    out[static_cast<Eigen::Index>(k)] = (*v)[k].get<double>();
  }
  return out;
}

Vector2 pair_field(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(path + ": expected a pair of numbers");
  return {v[0].get<double>(), v[1].get<double>()};
}

Box box_field(const json& obj, const std::string& path, const std::string& key) {
  const json* v = find(obj, key);
  const std::string p = join(path, key);
  if (!v) throw ConfigError(p + ": required field is missing");
  allow_keys(*v, p, {"lower", "upper"});
  Box b{vector_field(*v, p, "lower"), vector_field(*v, p, "upper")};
  try {
    b.validate(p);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return b;
}

ModelConfig parse_model(const json& doc) {
  const std::string path = "model";
  const json* m = find(doc, "model");
  if (!m) throw ConfigError("model: required block is missing");
  allow_keys(*m, path, {"family", "diffusion", "drift", "periodic", "sigma_box", "theta_box",
                        "sigma_true", "theta_true", "bounds"});
  ModelConfig out;
  out.family = text_or(*m, path, "family", "constant");
  if (out.family != "constant" && out.family != "periodic")
    throw ConfigError("model.family: expected 'constant' or 'periodic'");

  if (const json* d = find(*m, "diffusion")) {
    const std::string p = "model.diffusion";
    allow_keys(*d, p, {"scale", "s1", "s2", "rho", "free"});
    out.diffusion.scale = number_or(*d, p, "scale", 1.0);
    out.diffusion.s1 = number_or(*d, p, "s1", 1.0);
    out.diffusion.s2 = number_or(*d, p, "s2", 1.0);
    out.diffusion.rho = number_or(*d, p, "rho", 0.0);
    if (const json* f = find(*d, "free")) {
      if (!f->is_array()) throw ConfigError(p + ".free: expected an array of names");
      for (const auto& name : *f) {
        if (!name.is_string()) throw ConfigError(p + ".free: expected an array of names");
        out.diffusion.free.push_back(name.get<std::string>());
      }
    }
  } else {
    throw ConfigError("model.diffusion: required block is missing");
  }

  if (const json* d = find(*m, "drift")) {
    const std::string p = "model.drift";
    allow_keys(*d, p, {"intercept", "directions"});
    if (const json* i = find(*d, "intercept")) out.drift.intercept = pair_field(*i, p + ".intercept");
    const json* dirs = find(*d, "directions");
    if (!dirs || !dirs->is_array()) throw ConfigError(p + ".directions: expected an array of pairs");
    for (std::size_t k = 0; k < dirs->size(); ++k)
      out.drift.directions.push_back(pair_field((*dirs)[k], p + ".directions[" + std::to_string(k) + "]"));
  } else {
    throw ConfigError("model.drift: required block is missing");
  }

  if (const json* d = find(*m, "periodic")) {
    const std::string p = "model.periodic";
    allow_keys(*d, p, {"period", "scale_amplitude", "rho_amplitude", "drift_amplitude"});
    out.periodic.period = number_or(*d, p, "period", 1.0);
    out.periodic.scale_amplitude = number_or(*d, p, "scale_amplitude", 0.0);
    out.periodic.rho_amplitude = number_or(*d, p, "rho_amplitude", 0.0);
    out.periodic.drift_amplitude = number_or(*d, p, "drift_amplitude", 0.0);
  }

  out.space.sigma = box_field(*m, path, "sigma_box");
  out.space.theta = box_field(*m, path, "theta_box");
  if (find(*m, "sigma_true")) out.space.sigma_true = vector_field(*m, path, "sigma_true");
  if (find(*m, "theta_true")) out.space.theta_true = vector_field(*m, path, "theta_true");

  if (const json* b = find(*m, "bounds")) {
    const std::string p = "model.bounds";
    allow_keys(*b, p, {"c1", "c2", "rho_max"});
    out.bounds.c1 = number_or(*b, p, "c1", out.bounds.c1);
    out.bounds.c2 = number_or(*b, p, "c2", out.bounds.c2);
    out.bounds.rho_max = number_or(*b, p, "rho_max", out.bounds.rho_max);
  }
  return out;
}

SamplingConfig parse_sampling(const json& doc) {
  const std::string path = "sampling";
  const json* s = find(doc, "sampling");
  if (!s) throw ConfigError("sampling: required block is missing");
  allow_keys(*s, path, {"generator", "lambda1", "lambda2", "offset2", "n", "h_n", "gamma"});
  SamplingConfig out;
  const std::string gen = text_or(*s, path, "generator", "poisson");
  if (gen == "poisson") {
    out.generator.kind = SchemeGenerator::Kind::poisson;
  } else if (gen == "equidistant") {
    out.generator.kind = SchemeGenerator::Kind::equidistant;
  } else {
    throw ConfigError("sampling.generator: expected 'poisson' or 'equidistant'");
  }
  out.generator.lambda1 = number_or(*s, path, "lambda1", 1.0);
  out.generator.lambda2 = number_or(*s, path, "lambda2", 1.0);
  out.generator.offset2 = number_or(*s, path, "offset2", 0.0);
  if (!(out.generator.lambda1 > 0.0)) throw ConfigError("sampling.lambda1: must be positive");
  if (!(out.generator.lambda2 > 0.0)) throw ConfigError("sampling.lambda2: must be positive");
  if (!(out.generator.offset2 >= 0.0 && out.generator.offset2 < 1.0))
    throw ConfigError("sampling.offset2: must lie in [0, 1)");
  out.n = integer(*s, path, "n");
  if (out.n < 10) throw ConfigError("sampling.n: must be at least 10");
  const bool has_h = find(*s, "h_n") != nullptr;
  const bool has_gamma = find(*s, "gamma") != nullptr;
  if (has_h && has_gamma) throw ConfigError("sampling: give either h_n or gamma, not both");
  if (has_h) {
    out.h_n = number(*s, path, "h_n");
    if (!(out.h_n > 0.0)) throw ConfigError("sampling.h_n: must be positive");
  } else {
    out.gamma = has_gamma ? number(*s, path, "gamma") : 0.5;
    if (!(*out.gamma > 0.0 && *out.gamma < 1.0))
      throw ConfigError("sampling.gamma: must lie in (0, 1)");
    out.h_n = std::pow(static_cast<double>(out.n), -*out.gamma);
  }
  return out;
}

RunConfig parse_run(const json& doc) {
  RunConfig out;
  const json* r = find(doc, "run");
  if (!r) return out;
  const std::string path = "run";
  allow_keys(*r, path, {"replications", "seed", "workers"});
  out.replications = static_cast<int>(integer_or(*r, path, "replications", 1));
  if (out.replications < 1) throw ConfigError("run.replications: must be at least 1");
  if (find(*r, "seed")) out.seed = seed_value(*r, path, "seed");
  out.workers = static_cast<int>(integer_or(*r, path, "workers", 1));
  if (out.workers < 1) throw ConfigError("run.workers: must be at least 1");
  return out;
}

AsymptoticsConfig parse_asymptotics(const json& doc) {
  AsymptoticsConfig out;
  const json* a = find(doc, "asymptotics");
  if (!a) return out;
  const std::string path = "asymptotics";
  allow_keys(*a, path, {"p_max", "t_avg", "constants"});
  if (find(*a, "p_max")) {
    out.p_max = static_cast<int>(integer(*a, path, "p_max"));
    if (*out.p_max < 1) throw ConfigError("asymptotics.p_max: must be at least 1");
  }
  out.averaging.t_avg = number_or(*a, path, "t_avg", 100.0);
  if (!(out.averaging.t_avg > 0.0)) throw ConfigError("asymptotics.t_avg: must be positive");
  if (const json* c = find(*a, "constants")) {
    const std::string p = "asymptotics.constants";
    allow_keys(*c, p, {"source", "path", "value", "replications", "n", "h_n", "windows",
                       "window_seed", "seed"});
    ConstantsConfig& cc = out.constants;
    cc.source = text_or(*c, p, "source", "estimate");
    static const std::set<std::string> sources{"estimate", "inline", "file", "synchronous", "none"};
    if (!sources.contains(cc.source))
      throw ConfigError(p + ".source: expected estimate, inline, file, synchronous or none");
    cc.path = text_or(*c, p, "path", "");
    if (cc.source == "file" && cc.path.empty()) throw ConfigError(p + ".path: required for source 'file'");
    if (cc.source == "inline") {
      const json* v = find(*c, "value");
      if (!v) throw ConfigError(p + ".value: required for source 'inline'");
      cc.inline_value = *v;
    }
    cc.replications = static_cast<int>(integer_or(*c, p, "replications", cc.replications));
    if (cc.replications < 2) throw ConfigError(p + ".replications: must be at least 2");
    cc.n = integer_or(*c, p, "n", cc.n);
    cc.h_n = number_or(*c, p, "h_n", cc.h_n);
    if (cc.n < 1 || !(cc.h_n > 0.0)) throw ConfigError(p + ": need n >= 1 and h_n > 0");
    cc.windows = text_or(*c, p, "windows", "unit");
    if (cc.windows != "unit" && cc.windows != "random")
      throw ConfigError(p + ".windows: expected 'unit' or 'random'");
    if (find(*c, "window_seed")) cc.window_seed = seed_value(*c, p, "window_seed");
    if (find(*c, "seed")) cc.seed = seed_value(*c, p, "seed");
  }
  return out;
}

OptimizerConfig parse_optimizer(const json& doc) {
  OptimizerConfig out;
  const json* o = find(doc, "optimizer");
  if (!o) return out;
  const std::string path = "optimizer";
  allow_keys(*o, path, {"grid_per_dim", "xtol", "ftol", "max_evaluations", "closed_form",
                        "boundary_tol"});
  out.grid_per_dim = static_cast<int>(integer_or(*o, path, "grid_per_dim", out.grid_per_dim));
  out.xtol = number_or(*o, path, "xtol", out.xtol);
  out.ftol = number_or(*o, path, "ftol", out.ftol);
  out.max_evaluations = static_cast<int>(integer_or(*o, path, "max_evaluations", out.max_evaluations));
  out.boundary_tol = number_or(*o, path, "boundary_tol", out.boundary_tol);
  if (const json* c = find(*o, "closed_form")) {
    if (!c->is_boolean()) throw ConfigError("optimizer.closed_form: expected true or false");
    out.closed_form = c->get<bool>();
  }
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------

std::string fmt(double x) {
  if (!std::isfinite(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(number_or_null(v[k]));
  return a;
}

json to_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(number_or_null(m(r, c)));
    a.push_back(row);
  }
  return a;
}

json optional_to_json(const std::optional<double>& x) {
  return x ? number_or_null(*x) : json(nullptr);
}

json estimates_to_json(const std::vector<McEstimate>& list) {
  json a = json::array();
  for (const auto& e : list) a.push_back({{"mean", e.mean}, {"se", e.se}});
  return a;
}

std::vector<McEstimate> estimates_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array");
  std::vector<McEstimate> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string p = path + "[" + std::to_string(k) + "]";
    out.push_back({number(j[k], p, "mean"), number_or(j[k], p, "se", 0.0)});
  }
  return out;
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << doc.dump(2) << '\n';
  if (!os) throw Error("failed while writing " + path.string());
}

std::filesystem::path output_dir(const ExperimentConfig& cfg, const CommandOptions& opts) {
  std::filesystem::path dir = opts.out ? *opts.out : std::filesystem::path(cfg.output_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

ExperimentConfig load_with_overrides(const CommandOptions& opts) {
  ExperimentConfig cfg = load_config(opts.config);
  if (opts.seed) cfg.run.seed = *opts.seed;
  if (opts.workers) {
    if (*opts.workers < 1) throw ConfigError("--workers: must be at least 1");
    cfg.run.workers = *opts.workers;
  }
  return cfg;
}

void require_truth(const ExperimentConfig& cfg) {
  if (!cfg.model.space.sigma_true) throw ConfigError("model.sigma_true: required for this command");
  if (!cfg.model.space.theta_true) throw ConfigError("model.theta_true: required for this command");
}

}  // namespace

// ---------------------------------------------------------------------------

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  allow_keys(doc, "", {"model", "sampling", "run", "asymptotics", "optimizer", "lan", "output"});
  ExperimentConfig cfg;
  cfg.source = doc;
  cfg.model = parse_model(doc);
  cfg.sampling = parse_sampling(doc);
  cfg.run = parse_run(doc);
  cfg.asymptotics = parse_asymptotics(doc);
  cfg.optimizer = parse_optimizer(doc);
  if (const json* l = find(doc, "lan")) {
    allow_keys(*l, "lan", {"u"});
    if (find(*l, "u")) cfg.lan_u = vector_field(*l, "lan", "u");
  }
  if (const json* o = find(doc, "output")) {
    allow_keys(*o, "output", {"dir"});
    cfg.output_dir = text_or(*o, "output", "dir", cfg.output_dir);
  }
  // Build once so that model errors surface as configuration errors.
  (void)build_model(cfg.model);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open configuration file " + path.string());
  json doc;
  try {
    doc = json::parse(is, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

CoefficientModel build_model(const ModelConfig& cfg) {
  try {
    if (cfg.family == "periodic")
      return make_periodic_model(cfg.diffusion, cfg.drift, cfg.periodic, cfg.space, cfg.bounds);
    return make_constant_model(cfg.diffusion, cfg.drift, cfg.space, cfg.bounds);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

int resolved_p_max(const ExperimentConfig& cfg) {
  return cfg.asymptotics.p_max.value_or(choose_p_max(cfg.model.bounds.rho_max));
}

std::optional<SchemeConstants> obtain_constants(const ExperimentConfig& cfg,
                                                GapDiagnostics* diagnostics) {
  const ConstantsConfig& cc = cfg.asymptotics.constants;
  const int p_max = resolved_p_max(cfg);
  if (cc.source == "none") return std::nullopt;
  if (cc.source == "synchronous") return SchemeConstants::synchronous(p_max);
  if (cc.source == "inline") return constants_from_json(cc.inline_value);
  if (cc.source == "file") {
    std::ifstream is(cc.path);
    if (!is) throw ConfigError("asymptotics.constants.path: cannot open " + cc.path);
    json doc;
    try {
      doc = json::parse(is);
    } catch (const json::parse_error& e) {
      throw ConfigError(cc.path + ": " + e.what());
    }
    return constants_from_json(doc.contains("constants") ? doc["constants"] : doc);
  }
  ConstantsOptions opts;
  opts.replications = cc.replications;
  opts.p_max = p_max;
  opts.n = cc.n;
  opts.h_n = cc.h_n;
  // A separate stream family from the replications of the same run seed.
  opts.seed = cc.seed.value_or(derive_seed(cfg.run.seed, 0xc0575a7e5ULL));
  opts.workers = cfg.run.workers;
  if (cc.windows == "random")
    opts.windows = Partition::random(static_cast<double>(cc.n) * cc.h_n, cc.window_seed);
  ConstantsResult r = estimate_constants(cfg.sampling.generator, opts);
  if (diagnostics) *diagnostics = r.diagnostics;
  return r.constants;
}

// ---------------------------------------------------------------------------

namespace {

ErrorSummary summarize(const std::string& name, double truth, double rate, double theoretical_sd,
                       const std::vector<double>& scaled, const std::vector<double>& standardized,
                       const std::vector<bool>& covered, const std::vector<double>& raw) {
  ErrorSummary s;
  s.name = name;
  s.truth = truth;
  s.rate = rate;
  s.theoretical_sd = theoretical_sd;
  s.count = static_cast<int>(scaled.size());
  if (scaled.empty()) return s;
  s.bias = stats::mean_sd(raw).mean;
  s.standardized_mean = stats::mean_sd(standardized).mean;
  int hits = 0;
  for (bool c : covered) hits += c;
  s.coverage = static_cast<double>(hits) / static_cast<double>(covered.size());
  if (scaled.size() >= 2) {
    s.empirical_sd = stats::mean_sd(scaled).sd;
    s.sd_ratio = *s.empirical_sd / theoretical_sd;
    s.standardized_sd = stats::mean_sd(standardized).sd;
    s.skewness = stats::skewness(standardized);
    s.excess_kurtosis = stats::excess_kurtosis(standardized);
    s.ks_distance = stats::ks_normal(standardized);
  }
  return s;
}

std::vector<ErrorSummary> summarize_rows(const std::vector<const McRow*>& rows,
                                         const Vector& sigma0, const Vector& theta0, long n,
                                         double horizon, const Matrix& g1, const Matrix& g2) {
  const Eigen::Index d1 = sigma0.size(), d2 = theta0.size();
  Eigen::SelfAdjointEigenSolver<Matrix> e1(g1), e2(g2);
  const Matrix root1 = e1.operatorSqrt(), root2 = e2.operatorSqrt();
  const Vector sd1 = g1.inverse().diagonal().cwiseSqrt();
  const Vector sd2 = g2.inverse().diagonal().cwiseSqrt();
  const double rate1 = std::sqrt(static_cast<double>(n)), rate2 = std::sqrt(horizon);
  std::vector<ErrorSummary> out;
  for (Eigen::Index k = 0; k < d1 + d2; ++k) {
    const bool is_sigma = k < d1;
    const Eigen::Index q = is_sigma ? k : k - d1;
    std::vector<double> scaled, standardized, raw;
    std::vector<bool> covered;
    for (const McRow* row : rows) {
      const EstimateReport& r = *row->report;
      const Vector err = is_sigma ? Vector(r.sigma_hat - sigma0) : Vector(r.theta_hat - theta0);
      const double rate = is_sigma ? rate1 : rate2;
      const Vector z = rate * (is_sigma ? root1 : root2) * err;
      raw.push_back(err[q]);
      scaled.push_back(rate * err[q]);
      standardized.push_back(z[q]);
      const Matrix& ci = is_sigma ? r.ci_sigma : r.ci_theta;
      const double truth = is_sigma ? sigma0[q] : theta0[q];
      covered.push_back(ci(q, 0) <= truth && truth <= ci(q, 1));
    }
    const std::string name = (is_sigma ? "sigma[" : "theta[") + std::to_string(q) + "]";
    out.push_back(summarize(name, is_sigma ? sigma0[q] : theta0[q], is_sigma ? rate1 : rate2,
                            is_sigma ? sd1[q] : sd2[q], scaled, standardized, covered, raw));
  }
  return out;
}

bool any_boundary(const EstimateReport& r) {
  for (bool b : r.stage1.boundary)
    if (b) return true;
  for (bool b : r.stage2.boundary)
    if (b) return true;
  return false;
}

}  // namespace

McResult run_mc(const ExperimentConfig& cfg, const CoefficientModel& model,
                const SchemeConstants& constants) {
  require_truth(cfg);
  const Vector& sigma0 = *cfg.model.space.sigma_true;
  const Vector& theta0 = *cfg.model.space.theta_true;
  const long n = cfg.sampling.n;
  const double h = cfg.sampling.h_n;
  const auto R = static_cast<std::size_t>(cfg.run.replications);

  McResult result;
  McSummary& s = result.summary;
  s.gamma1 = gamma1(model, constants, sigma0, cfg.asymptotics.averaging).value;
  s.gamma2 = gamma2(model, constants, sigma0, theta0, cfg.asymptotics.averaging).value;

  result.rows.resize(R);
  parallel_for(R, cfg.run.workers, [&](std::size_t r) {
    McRow& row = result.rows[r];
    row.replication = static_cast<int>(r);
    const ReplicationSeeds seeds = replication_seeds(cfg.run.seed, r);
    row.scheme_seed = seeds.scheme;
    row.path_seed = seeds.path;
    try {
      const SamplingScheme scheme = cfg.sampling.generator.generate(n, h, seeds.scheme);
      const OverlapMatrix overlap = build_overlap(scheme);
      const Vector dx = simulate_increments(scheme, overlap, model, sigma0, theta0, seeds.path);
      row.report = estimate({scheme, overlap, dx}, model, cfg.optimizer, &constants,
                            cfg.asymptotics.averaging);
      row.hy = hayashi_yoshida(dx, overlap);
      row.rv1 = dx.head(scheme.m1()).squaredNorm();
      row.rv2 = dx.tail(scheme.m2()).squaredNorm();
      row.ok = true;
    } catch (const Error& e) {
      row.ok = false;
      row.error = e.what();
      row.report.reset();
    }
  });

  std::vector<const McRow*> ok, interior;
  for (const auto& row : result.rows) {
    if (!row.ok) continue;
    ok.push_back(&row);
    if (any_boundary(*row.report)) {
      ++s.boundary_cases;
    } else {
      interior.push_back(&row);
    }
  }
  s.replications = static_cast<int>(R);
  s.failures = static_cast<int>(R - ok.size());
  const double horizon = static_cast<double>(n) * h;
  s.all = summarize_rows(ok, sigma0, theta0, n, horizon, s.gamma1, s.gamma2);
  s.interior = summarize_rows(interior, sigma0, theta0, n, horizon, s.gamma1, s.gamma2);
  if (R == 1) s.warnings.push_back("a single replication: SD-based fields are null");
  if (R < 50) s.warnings.push_back("fewer than 50 replications; summary statistics are noisy");
  if (s.failures > 0) s.warnings.push_back(std::to_string(s.failures) + " replications failed");
  return result;
}

void write_mc_csv(std::ostream& os, const McResult& result, const ExperimentConfig& cfg) {
  const Eigen::Index d1 = cfg.model.space.d1(), d2 = cfg.model.space.d2();
  std::vector<std::string> cols{"replication", "scheme_seed", "path_seed", "status", "n", "h_n",
                                "M1",          "M2",          "r_n",       "rho_bar"};
  for (Eigen::Index k = 0; k < d1; ++k) cols.push_back("sigma_hat_" + std::to_string(k));
  for (Eigen::Index k = 0; k < d2; ++k) cols.push_back("theta_hat_" + std::to_string(k));
  for (Eigen::Index k = 0; k < d1; ++k) {
    cols.push_back("se_sigma_plugin_" + std::to_string(k));
    cols.push_back("se_sigma_observed_" + std::to_string(k));
  }
  for (Eigen::Index k = 0; k < d2; ++k) {
    cols.push_back("se_theta_plugin_" + std::to_string(k));
    cols.push_back("se_theta_observed_" + std::to_string(k));
  }
  for (Eigen::Index k = 0; k < d1; ++k) cols.push_back("covered_sigma_" + std::to_string(k));
  for (Eigen::Index k = 0; k < d2; ++k) cols.push_back("covered_theta_" + std::to_string(k));
  for (const char* c : {"boundary_sigma", "boundary_theta", "stage1_evaluations", "stage2_method",
                        "hy", "rv1", "rv2", "error"})
    cols.emplace_back(c);
  for (std::size_t k = 0; k < cols.size(); ++k) os << (k ? "," : "") << cols[k];
  os << '\n';

  const Vector& sigma0 = *cfg.model.space.sigma_true;
  const Vector& theta0 = *cfg.model.space.theta_true;
  auto se = [](const std::optional<Matrix>& cov, Eigen::Index k) {
    return cov ? fmt(std::sqrt(std::max(0.0, (*cov)(k, k)))) : std::string();
  };
  for (const auto& row : result.rows) {
    std::vector<std::string> f{std::to_string(row.replication), std::to_string(row.scheme_seed),
                               std::to_string(row.path_seed), row.ok ? "ok" : "failed"};
    if (!row.ok) {
      f.resize(cols.size());
      std::string msg = row.error;
      for (char& ch : msg)
        if (ch == '"' || ch == ',' || ch == '\n') ch = ' ';
      f.back() = msg;
    } else {
      const EstimateReport& r = *row.report;
      f.push_back(std::to_string(r.n));
      f.push_back(fmt(r.h_n));
      f.push_back(std::to_string(r.m1));
      f.push_back(std::to_string(r.m2));
      f.push_back(fmt(r.r_n));
      f.push_back(fmt(r.rho_bar));
      for (Eigen::Index k = 0; k < d1; ++k) f.push_back(fmt(r.sigma_hat[k]));
      for (Eigen::Index k = 0; k < d2; ++k) f.push_back(fmt(r.theta_hat[k]));
      for (Eigen::Index k = 0; k < d1; ++k) {
        f.push_back(se(r.cov_sigma_plugin, k));
        f.push_back(se(r.cov_sigma_observed, k));
      }
      for (Eigen::Index k = 0; k < d2; ++k) {
        f.push_back(se(r.cov_theta_plugin, k));
        f.push_back(se(r.cov_theta_observed, k));
      }
      for (Eigen::Index k = 0; k < d1; ++k)
        f.push_back(r.ci_sigma(k, 0) <= sigma0[k] && sigma0[k] <= r.ci_sigma(k, 1) ? "1" : "0");
      for (Eigen::Index k = 0; k < d2; ++k)
        f.push_back(r.ci_theta(k, 0) <= theta0[k] && theta0[k] <= r.ci_theta(k, 1) ? "1" : "0");
      auto flags = [](const std::vector<bool>& b) {
        std::string s;
        for (bool x : b) s += x ? '1' : '0';
        return s;
      };
      f.push_back(flags(r.stage1.boundary));
      f.push_back(flags(r.stage2.boundary));
      f.push_back(std::to_string(r.stage1.evaluations));
      f.push_back(r.stage2.method);
      f.push_back(fmt(row.hy));
      f.push_back(fmt(row.rv1));
      f.push_back(fmt(row.rv2));
      f.emplace_back();
    }
    for (std::size_t k = 0; k < f.size(); ++k) os << (k ? "," : "") << f[k];
    os << '\n';
  }
}

// ---------------------------------------------------------------------------

json to_json(const SchemeConstants& c) {
  return {{"p_max", c.p_max},
          {"a0_1", {{"mean", c.a0_1.mean}, {"se", c.a0_1.se}}},
          {"a0_2", {{"mean", c.a0_2.mean}, {"se", c.a0_2.se}}},
          {"a", estimates_to_json(c.a)},
          {"f11", estimates_to_json(c.f11)},
          {"f12", estimates_to_json(c.f12)},
          {"f22", estimates_to_json(c.f22)},
          {"replications", c.replications},
          {"retained_windows", c.retained_windows},
          {"windows", c.windows}};
}

json to_json(const GapDiagnostics& d) {
  return {{"count_moments", d.count_moments},
          {"u_values", d.u_values},
          {"empty_frequency", d.empty_frequency}};
}

SchemeConstants constants_from_json(const json& j) {
  const std::string path = "constants";
  if (!j.is_object()) throw ConfigError("constants: expected an object");
  SchemeConstants c;
  c.p_max = static_cast<int>(integer(j, path, "p_max"));
  auto single = [&](const char* key) {
    const json* v = find(j, key);
    if (!v) throw ConfigError(join(path, key) + ": required field is missing");
    return McEstimate{number(*v, join(path, key), "mean"), number_or(*v, join(path, key), "se", 0.0)};
  };
  c.a0_1 = single("a0_1");
  c.a0_2 = single("a0_2");
  for (const char* key : {"a", "f11", "f12", "f22"}) {
    const json* v = find(j, key);
    if (!v) throw ConfigError(join(path, key) + ": required field is missing");
    auto list = estimates_from_json(*v, join(path, key));
    if (std::string(key) == "a") c.a = std::move(list);
    if (std::string(key) == "f11") c.f11 = std::move(list);
    if (std::string(key) == "f12") c.f12 = std::move(list);
    if (std::string(key) == "f22") c.f22 = std::move(list);
  }
  c.replications = static_cast<int>(integer_or(j, path, "replications", 0));
  c.retained_windows = static_cast<int>(integer_or(j, path, "retained_windows", 0));
  c.windows = text_or(j, path, "windows", "unit windows");
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("constants: ") + e.what());
  }
  return c;
}

json to_json(const EstimateReport& r) {
  auto opt_matrix = [](const std::optional<Matrix>& m) { return m ? to_json(*m) : json(nullptr); };
  auto opt_se = [](const std::optional<Matrix>& m) {
    return m ? to_json(Vector(m->diagonal().cwiseMax(0.0).cwiseSqrt())) : json(nullptr);
  };
  return {{"sigma_hat", to_json(r.sigma_hat)},
          {"theta_hat", to_json(r.theta_hat)},
          {"h1", number_or_null(r.stage1.value)},
          {"h2", number_or_null(r.stage2.value)},
          {"stage1_method", r.stage1.method},
          {"stage1_converged", r.stage1.converged},
          {"stage1_evaluations", r.stage1.evaluations},
          {"stage2_method", r.stage2.method},
          {"stage2_converged", r.stage2.converged},
          {"stage2_evaluations", r.stage2.evaluations},
          {"boundary_sigma", r.stage1.boundary},
          {"boundary_theta", r.stage2.boundary},
          {"gamma1", opt_matrix(r.gamma1)},
          {"gamma2", opt_matrix(r.gamma2)},
          {"cov_sigma_plugin", opt_matrix(r.cov_sigma_plugin)},
          {"cov_theta_plugin", opt_matrix(r.cov_theta_plugin)},
          {"cov_sigma_observed", opt_matrix(r.cov_sigma_observed)},
          {"cov_theta_observed", opt_matrix(r.cov_theta_observed)},
          {"se_sigma_plugin", opt_se(r.cov_sigma_plugin)},
          {"se_theta_plugin", opt_se(r.cov_theta_plugin)},
          {"se_sigma_observed", opt_se(r.cov_sigma_observed)},
          {"se_theta_observed", opt_se(r.cov_theta_observed)},
          {"ci_sigma", to_json(r.ci_sigma)},
          {"ci_theta", to_json(r.ci_theta)},
          {"ci_source", r.ci_source},
          {"n", r.n},
          {"h_n", r.h_n},
          {"M1", r.m1},
          {"M2", r.m2},
          {"r_n", r.r_n},
          {"rho_bar", r.rho_bar},
          {"warnings", r.warnings}};
}

namespace {
json summary_list(const std::vector<ErrorSummary>& list) {
  json a = json::array();
  for (const auto& s : list) {
    a.push_back({{"parameter", s.name},
                 {"truth", s.truth},
                 {"rate", s.rate},
                 {"count", s.count},
                 {"bias", number_or_null(s.bias)},
                 {"empirical_sd", optional_to_json(s.empirical_sd)},
                 {"theoretical_sd", number_or_null(s.theoretical_sd)},
                 {"sd_ratio", optional_to_json(s.sd_ratio)},
                 {"coverage", number_or_null(s.coverage)},
                 {"standardized_mean", number_or_null(s.standardized_mean)},
                 {"standardized_sd", optional_to_json(s.standardized_sd)},
                 {"skewness", optional_to_json(s.skewness)},
                 {"excess_kurtosis", optional_to_json(s.excess_kurtosis)},
                 {"ks_distance", optional_to_json(s.ks_distance)}});
  }
  return a;
}
}  // namespace

json to_json(const McSummary& s) {
  return {{"replications", s.replications},
          {"failures", s.failures},
          {"boundary_cases", s.boundary_cases},
          {"gamma1", to_json(s.gamma1)},
          {"gamma2", to_json(s.gamma2)},
          {"parameters", summary_list(s.all)},
          {"interior_only", summary_list(s.interior)},
          {"warnings", s.warnings}};
}

json to_json(const LanSummary& s) {
  return {{"replications", s.log_ratios.size()},
          {"mean", s.mean},
          {"mean_se", s.mean_se},
          {"variance", s.variance},
          {"reference_mean", s.reference_mean},
          {"reference_variance", s.reference_variance},
          {"gamma1", to_json(s.gamma1)},
          {"gamma2", to_json(s.gamma2)},
          {"epsilon_n", to_json(s.epsilon)},
          {"alpha0", to_json(s.alpha0)},
          {"alpha1", to_json(s.alpha1)}};
}

std::string fingerprint(const json& doc) {
  // FNV-1a over the canonical dump.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : doc.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const CommandOptions& opts) {
  const ExperimentConfig cfg = load_with_overrides(opts);
  require_truth(cfg);
  const CoefficientModel model = build_model(cfg.model);
  const ReplicationSeeds seeds = replication_seeds(cfg.run.seed, 0);
  const SamplingScheme scheme =
      cfg.sampling.generator.generate(cfg.sampling.n, cfg.sampling.h_n, seeds.scheme);
  const OverlapMatrix overlap = build_overlap(scheme);
  const Vector dx = simulate_increments(scheme, overlap, model, *cfg.model.space.sigma_true,
                                        *cfg.model.space.theta_true, seeds.path);
  const auto dir = output_dir(cfg, opts);
  {
    std::ofstream os(dir / "scheme.txt");
    write_scheme(os, scheme);
    if (!os) throw Error("failed to write scheme.txt");
  }
  {
    std::ofstream os(dir / "increments.txt");
    write_increments(os, dx, scheme.m1(), scheme.m2());
    if (!os) throw Error("failed to write increments.txt");
  }
  std::cout << "wrote " << (dir / "scheme.txt").string() << " and "
            << (dir / "increments.txt").string() << " (M1 = " << scheme.m1()
            << ", M2 = " << scheme.m2() << ")\n";
  return 0;
}

int cmd_estimate(const CommandOptions& opts) {
  const ExperimentConfig cfg = load_with_overrides(opts);
  const CoefficientModel model = build_model(cfg.model);
  const auto dir = output_dir(cfg, opts);
  const auto scheme_path = opts.scheme ? *opts.scheme : dir / "scheme.txt";
  const auto inc_path = opts.increments ? *opts.increments : dir / "increments.txt";
  std::ifstream ss(scheme_path);
  if (!ss) throw DataError("cannot open scheme file " + scheme_path.string());
  const SamplingScheme scheme = [&] {
    try {
      return read_scheme(ss);
    } catch (const DataError& e) {
      throw DataError(scheme_path.string() + ": " + e.what());
    }
  }();
  std::ifstream is(inc_path);
  if (!is) throw DataError("cannot open increments file " + inc_path.string());
  const Vector dx = [&] {
    try {
      return read_increments(is, scheme.m1(), scheme.m2());
    } catch (const DataError& e) {
      throw DataError(inc_path.string() + ": " + e.what());
    }
  }();
  const OverlapMatrix overlap = build_overlap(scheme);
  const std::optional<SchemeConstants> constants = obtain_constants(cfg);
  const EstimateReport rep = estimate({scheme, overlap, dx}, model, cfg.optimizer,
                                      constants ? &*constants : nullptr, cfg.asymptotics.averaging);
  json doc = to_json(rep);
  doc["fingerprint"] = fingerprint(cfg.source);
  doc["software"] = kVersion;
  write_json_file(dir / "estimate.json", doc);
  std::cout << "wrote " << (dir / "estimate.json").string() << '\n';
  return 0;
}

int cmd_mc(const CommandOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = load_with_overrides(opts);
  require_truth(cfg);
  const CoefficientModel model = build_model(cfg.model);
  std::optional<SchemeConstants> constants = obtain_constants(cfg);
  if (!constants) throw ConfigError("asymptotics.constants.source: mc needs scheme constants");
  const McResult result = run_mc(cfg, model, *constants);
  const auto dir = output_dir(cfg, opts);
  {
    std::ofstream os(dir / "mc.csv");
    write_mc_csv(os, result, cfg);
    if (!os) throw Error("failed to write mc.csv");
  }
  json doc = to_json(result.summary);
  doc["csv"] = "mc.csv";
  doc["constants"] = to_json(*constants);
  doc["n"] = cfg.sampling.n;
  doc["h_n"] = cfg.sampling.h_n;
  doc["seed"] = cfg.run.seed;
  doc["fingerprint"] = fingerprint(cfg.source);
  doc["software"] = kVersion;
  doc["wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json_file(dir / "mc_summary.json", doc);
  for (const auto& w : result.summary.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "wrote " << (dir / "mc.csv").string() << " and "
            << (dir / "mc_summary.json").string() << '\n';
  if (10 * result.summary.failures > result.summary.replications)
    throw RunFailure(std::to_string(result.summary.failures) + " of " +
                     std::to_string(result.summary.replications) + " replications failed");
  return 0;
}

int cmd_constants(const CommandOptions& opts) {
  ExperimentConfig cfg = load_with_overrides(opts);
  cfg.asymptotics.constants.source = "estimate";
  GapDiagnostics diag;
  const SchemeConstants c = *obtain_constants(cfg, &diag);
  const auto dir = output_dir(cfg, opts);
  json doc{{"generator", cfg.sampling.generator.name()},
           {"constants", to_json(c)},
           {"diagnostics", to_json(diag)},
           {"fingerprint", fingerprint(cfg.source)},
           {"software", kVersion}};
  write_json_file(dir / "constants.json", doc);
  std::cout << "wrote " << (dir / "constants.json").string() << '\n';
  return 0;
}

int cmd_lan(const CommandOptions& opts) {
  const ExperimentConfig cfg = load_with_overrides(opts);
  require_truth(cfg);
  if (!cfg.lan_u) throw ConfigError("lan.u: required for the lan command");
  const CoefficientModel model = build_model(cfg.model);
  const std::optional<SchemeConstants> constants = obtain_constants(cfg);
  if (!constants) throw ConfigError("asymptotics.constants.source: lan needs scheme constants");
  LanOptions lo;
  lo.u = *cfg.lan_u;
  lo.n = cfg.sampling.n;
  lo.h_n = cfg.sampling.h_n;
  lo.replications = cfg.run.replications;
  lo.seed = cfg.run.seed;
  lo.workers = cfg.run.workers;
  lo.averaging = cfg.asymptotics.averaging;
  const LanSummary s = lan_experiment(model, cfg.sampling.generator, *constants, lo);
  const auto dir = output_dir(cfg, opts);
  json doc = to_json(s);
  doc["fingerprint"] = fingerprint(cfg.source);
  doc["software"] = kVersion;
  write_json_file(dir / "lan.json", doc);
  std::cout << "wrote " << (dir / "lan.json").string() << '\n';
  return 0;
}

int run_command(const std::string& name, const CommandOptions& opts) {
  try {
    if (name == "simulate") return cmd_simulate(opts);
    if (name == "estimate") return cmd_estimate(opts);
    if (name == "mc") return cmd_mc(opts);
    if (name == "constants") return cmd_constants(opts);
    if (name == "lan") return cmd_lan(opts);
    std::cerr << "error: unknown command '" << name << "'\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const RunFailure& e) {
    std::cerr << "run failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace nsync

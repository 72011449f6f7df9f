#include "config.hpp"

#include <fstream>

#include "manifest.hpp"
#include "qti/random.hpp"

namespace qti::cli {

using nlohmann::json;

namespace {

// Object wrapper that remembers which keys were read and rejects the rest.
class Section {
public:
  Section(const json &obj, std::string path, std::initializer_list<const char *> allowed)
    : obj_(obj)
    , path_(std::move(path)) {
    if (!obj_.is_object()) { throw ConfigError(path_ + ": expected an object"); }
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto &item : obj_.items()) {
      if (!ok.count(item.key())) { throw ConfigError("unknown key '" + key_path(item.key()) + "'"); }
    }
  }

  bool has(const char *key) const { return obj_.contains(key); }
  const json &at(const char *key) const { return obj_.at(key); }
  std::string key_path(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void read(const char *key, T &dst) const {
    if (!obj_.contains(key)) { return; }
    try {
      dst = obj_.at(key).get<T>();
    } catch (const json::exception &) {
      throw ConfigError("wrong type for '" + key_path(key) + "'");
    }
  }

private:
  const json &obj_;
  std::string path_;
};

void read_range(const Section &s, const char *key, double &lo, double &hi) {
  if (!s.has(key)) { return; }
  std::vector<double> v;
  s.read(key, v);
  if (v.size() != 2) { throw ConfigError("'" + s.key_path(key) + "' must be [min, max]"); }
  lo = v[0];
  hi = v[1];
}

void parse_design(const json &j, DesignSection &d) {
  Section const s(j, "design",
                  {"alpha_a_deg", "alpha_b_deg", "repetitions", "tr_ms", "te_ms", "invert", "inversion_gap_ms",
                   "slice_thickness_mm", "search"});
  s.read("alpha_a_deg", d.alpha_a_deg);
  s.read("alpha_b_deg", d.alpha_b_deg);
  s.read("repetitions", d.timing.repetitions);
  s.read("tr_ms", d.timing.tr_ms);
  s.read("te_ms", d.timing.te_ms);
  s.read("invert", d.timing.invert);
  s.read("inversion_gap_ms", d.timing.inversion_gap_ms);
  s.read("slice_thickness_mm", d.timing.slice_thickness_mm);
  if (s.has("search")) {
    Section const q(s.at("search"), "design.search", {"alpha_a_deg", "alpha_b_deg", "step_deg", "n_samples"});
    read_range(q, "alpha_a_deg", d.search_alpha_a.lo, d.search_alpha_a.hi);
    read_range(q, "alpha_b_deg", d.search_alpha_b.lo, d.search_alpha_b.hi);
    q.read("step_deg", d.search_step_deg);
    q.read("n_samples", d.n_samples);
  }
  if (d.n_samples < 1) { throw ConfigError("design.search.n_samples must be >= 1"); }
  if (!(d.search_step_deg > 0.0)) { throw ConfigError("design.search.step_deg must be > 0"); }
}

void parse_prior(const json &j, TissuePrior &prior) {
  Section const s(j, "prior", {"sigma_fraction", "classes"});
  double frac = 0.1;
  s.read("sigma_fraction", frac);
  if (!(frac >= 0.0)) { throw ConfigError("prior.sigma_fraction must be >= 0"); }
  prior = TissuePrior::defaults(frac);
  if (!s.has("classes")) { return; }
  const json &arr = s.at("classes");
  if (!arr.is_array() || arr.empty()) { throw ConfigError("prior.classes must be a non-empty array"); }
  prior.classes.clear();
  for (std::size_t i = 0; i < arr.size(); ++i) {
    Section const c(arr[i], "prior.classes[" + std::to_string(i) + "]",
                    {"name", "t1_ms", "t2_ms", "weight", "sigma_t1_ms", "sigma_t2_ms"});
    TissueClass tc;
    c.read("name", tc.name);
    c.read("t1_ms", tc.mean_t1_ms);
    c.read("t2_ms", tc.mean_t2_ms);
    c.read("weight", tc.weight);
    tc.sigma_t1_ms = frac * tc.mean_t1_ms;
    tc.sigma_t2_ms = frac * tc.mean_t2_ms;
    c.read("sigma_t1_ms", tc.sigma_t1_ms);
    c.read("sigma_t2_ms", tc.sigma_t2_ms);
    if (tc.name.empty()) { throw ConfigError(c.key_path("name") + " is required"); }
    prior.classes.push_back(tc);
  }
}

void parse_phantom(const json &j, PhantomSpec &p) {
  Section const s(j, "phantom", {"preset", "size", "vessel_velocities_mm_s", "uniform_class"});
  s.read("preset", p.preset);
  s.read("size", p.size);
  s.read("vessel_velocities_mm_s", p.vessel_velocities_mm_s);
  s.read("uniform_class", p.uniform_class);
}

void parse_acquisition(const json &j, AcquisitionSection &a) {
  Section const s(j, "acquisition", {"coils", "acceleration", "center_radius", "snr"});
  s.read("coils", a.coils);
  s.read("acceleration", a.acceleration);
  s.read("center_radius", a.center_radius);
  s.read("snr", a.snr);
  if (a.coils < 1) { throw ConfigError("acquisition.coils must be >= 1"); }
  if (!(a.snr > 0.0)) { throw ConfigError("acquisition.snr must be > 0"); }
}

void parse_recon(const json &j, ReconSection &r) {
  Section const s(j, "recon",
                  {"rank", "admm_rho", "llr_lambda", "patch_size", "patch_stride", "n_admm_iters", "n_cg_iters",
                   "ensemble_n_t1", "ensemble_n_t2", "ensemble_flow_mm_s"});
  s.read("rank", r.config.rank);
  s.read("admm_rho", r.config.admm_rho);
  s.read("llr_lambda", r.config.llr_lambda);
  s.read("patch_size", r.config.patch_size);
  r.config.patch_stride = r.config.patch_size;
  s.read("patch_stride", r.config.patch_stride);
  s.read("n_admm_iters", r.config.n_admm_iters);
  s.read("n_cg_iters", r.config.n_cg_iters);
  s.read("ensemble_n_t1", r.ensemble_n_t1);
  s.read("ensemble_n_t2", r.ensemble_n_t2);
  s.read("ensemble_flow_mm_s", r.ensemble_flow_mm_s);
}

void parse_inference(const json &j, InferenceSection &inf) {
  Section const s(j, "inference", {"method", "n_t1", "n_t2", "t1_range_ms", "t2_range_ms", "sigma", "n_particles"});
  if (s.has("method")) {
    std::string m;
    s.read("method", m);
    try {
      inf.method = parse_inference_method(m);
    } catch (const InvalidArgument &e) {
      throw ConfigError(std::string("inference.method: ") + e.what());
    }
  }
  s.read("n_t1", inf.n_t1);
  s.read("n_t2", inf.n_t2);
  read_range(s, "t1_range_ms", inf.t1_min_ms, inf.t1_max_ms);
  read_range(s, "t2_range_ms", inf.t2_min_ms, inf.t2_max_ms);
  s.read("sigma", inf.sigma);
  s.read("n_particles", inf.n_particles);
}

void parse_analysis(const json &j, AnalysisSection &a) {
  Section const s(j, "analysis", {"angio_last_frames", "angio_range", "extract_times_ms", "t_acq_s"});
  s.read("angio_last_frames", a.angio_last_frames);
  if (s.has("angio_range")) {
    std::vector<Index> v;
    s.read("angio_range", v);
    if (v.size() != 2) { throw ConfigError("analysis.angio_range must be [start, end]"); }
    a.has_angio_range = true;
    a.angio_range = {v[0], v[1]};
  }
  s.read("extract_times_ms", a.extract_times_ms);
  s.read("t_acq_s", a.t_acq_s);
}

} // namespace

InferenceGrid InferenceSection::grid() const {
  return {log_spaced(t1_min_ms, t1_max_ms, n_t1), log_spaced(t2_min_ms, t2_max_ms, n_t2)};
}

void ExperimentConfig::require(std::initializer_list<const char *> needed, const std::string &command) const {
  for (const char *name : needed) {
    if (!has(name)) { throw ConfigError("command '" + command + "' needs a '" + name + "' section in the config"); }
  }
}

std::string ExperimentConfig::hash() const { return sha256_hex(raw.dump()); }

ExperimentConfig parse_config(const json &doc) {
  ExperimentConfig cfg;
  Section const top(doc, "", {"seed", "design", "prior", "phantom", "acquisition", "recon", "inference", "analysis"});
  top.read("seed", cfg.seed);
  for (const auto &item : doc.items()) {
    if (item.key() != "seed") { cfg.sections.insert(item.key()); }
  }
  try {
    if (cfg.has("design")) { parse_design(doc.at("design"), cfg.design); }
    if (cfg.has("prior")) { parse_prior(doc.at("prior"), cfg.prior); }
    if (cfg.has("phantom")) { parse_phantom(doc.at("phantom"), cfg.phantom); }
    if (cfg.has("acquisition")) { parse_acquisition(doc.at("acquisition"), cfg.acquisition); }
    if (cfg.has("recon")) { parse_recon(doc.at("recon"), cfg.recon); }
    if (cfg.has("inference")) { parse_inference(doc.at("inference"), cfg.inference); }
    if (cfg.has("analysis")) { parse_analysis(doc.at("analysis"), cfg.analysis); }
  } catch (const json::exception &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.raw = doc;
  cfg.raw["seed"] = cfg.seed;
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) { throw ConfigError("cannot read config file " + path.string()); }
  json doc;
  try {
    doc = json::parse(in, nullptr, true, false);
  } catch (const json::parse_error &e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

std::uint64_t derived_seed(const ExperimentConfig &config, SeedStream stream) {
  return stream_seed(config.seed, {static_cast<std::uint64_t>(stream)});
}

} // namespace qti::cli

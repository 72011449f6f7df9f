#include "stages.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "manifest.hpp"
#include "qti/array_io.hpp"
#include "qti/log.hpp"

namespace qti::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Bookkeeping shared by all stages: output dir, input checks, manifest.
class Stage {
public:
  Stage(const std::string &name, const ExperimentConfig &config, const fs::path &root)
    : root_(root)
    , dir_(root / name)
    , manifest_(name, config.seed, config.hash()) {
    fs::create_directories(dir_);
  }

  const fs::path &dir() const { return dir_; }

  fs::path input(const std::string &upstream, const std::string &file) {
    fs::path const path = root_ / upstream / file;
    require_file(path);
    manifest_.add_input(root_, path);
    auto &recorded = upstream_outputs(upstream);
    auto const key = path.lexically_relative(root_).generic_string();
    auto it = recorded.find(key);
    if (it == recorded.end()) {
      log::warn("input " + key + " is not listed in the " + upstream + " manifest");
    } else if (it->second != sha256_file(path)) {
      log::warn("input " + key + " changed since the " + upstream + " stage wrote it (stale artifact?)");
    }
    return path;
  }

  fs::path output(const std::string &file) {
    outputs_.push_back(dir_ / file);
    return outputs_.back();
  }

  void finish() {
    for (const auto &p : outputs_) { manifest_.add_output(root_, p); }
    manifest_.write(dir_);
  }

private:
  std::map<std::string, std::string> &upstream_outputs(const std::string &upstream) {
    auto it = upstream_.find(upstream);
    if (it == upstream_.end()) { it = upstream_.emplace(upstream, Manifest::recorded_outputs(root_ / upstream)).first; }
    return it->second;
  }

  fs::path root_;
  fs::path dir_;
  Manifest manifest_;
  std::vector<fs::path> outputs_;
  std::map<std::string, std::map<std::string, std::string>> upstream_;
};

std::ofstream open_text(const fs::path &path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) { throw FormatError("cannot write " + path.string()); }
  out << std::setprecision(10);
  return out;
}

SequenceDesign checked_sequence(const ExperimentConfig &config) {
  SequenceDesign d = config.design.sequence();
  d.validate();
  return d;
}

Re2 magnitude(const Cx2 &z) {
  Re2 out(z.dimension(0), z.dimension(1));
  for (Index i = 0; i < z.size(); ++i) { out.data()[i] = std::abs(z.data()[i]); }
  return out;
}

struct ClassRow {
  int label;
  std::string name;
  double t1, t2, pd, velocity;
};

std::vector<ClassRow> read_classes(const fs::path &path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line); // header
  std::vector<ClassRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) { continue; }
    std::istringstream s(line);
    ClassRow r{};
    std::string cell;
    std::getline(s, cell, ',');
    r.label = std::stoi(cell);
    std::getline(s, r.name, ',');
    std::getline(s, cell, ',');
    r.t1 = std::stod(cell);
    std::getline(s, cell, ',');
    r.t2 = std::stod(cell);
    std::getline(s, cell, ',');
    r.pd = std::stod(cell);
    std::getline(s, cell, ',');
    r.velocity = std::stod(cell);
    rows.push_back(r);
  }
  return rows;
}

double median(std::vector<double> v) {
  if (v.empty()) { return std::nan(""); }
  std::sort(v.begin(), v.end());
  std::size_t const n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

void cmd_design(const ExperimentConfig &config, const fs::path &out) {
  config.require({"design", "prior"}, "design");
  Stage st("design", config, out);
  const DesignSection &d = config.design;
  GridSearchOptions opt;
  opt.timing = d.timing;
  opt.n_samples = d.n_samples;
  GridSearchResult const result = grid_search(config.prior, d.search_alpha_a, d.search_alpha_b, d.search_step_deg,
                                              config.seed, opt);
  {
    auto f = open_text(st.output("landscape.csv"));
    write_landscape_csv(f, result);
  }
  const LandscapeCell &best = result.best_cell();
  json j;
  j["alpha_a_deg"] = best.candidate.alpha_a_deg;
  j["alpha_b_deg"] = best.candidate.alpha_b_deg;
  j["total_cost"] = best.cost.total_cost;
  j["utility_raw"] = best.cost.utility_raw;
  j["feasible_cells"] = result.cells.size();
  {
    auto f = open_text(st.output("best_design.json"));
    f << j.dump(2) << '\n';
  }
  st.finish();
  std::cout << "design: " << result.cells.size() << " cells, argmin alpha_a=" << best.candidate.alpha_a_deg
            << " alpha_b=" << best.candidate.alpha_b_deg << '\n';
}

void cmd_simulate(const ExperimentConfig &config, const fs::path &out) {
  config.require({"design", "phantom", "acquisition"}, "simulate");
  Stage st("simulate", config, out);
  SequenceDesign const design = checked_sequence(config);
  const AcquisitionSection &acq = config.acquisition;

  PhantomDef const ph = build_phantom(config.phantom, derived_seed(config, SeedStream::phantom));
  Index const H = ph.height(), W = ph.width();
  CoilSet const coils = make_coil_maps(H, W, acq.coils, derived_seed(config, SeedStream::coils));
  SamplingMask const masks =
    make_masks(H, W, design.repetitions(), acq.acceleration, acq.center_radius, derived_seed(config, SeedStream::masks));
  Cx3 const x = phantom_series(ph, design);
  double const sigma = noise_sigma_for_snr(x, acq.snr);
  KSpaceSeries const ksp = acquire(x, coils, masks, sigma, derived_seed(config, SeedStream::noise));

  Re2 t1(H, W), t2(H, W), pd(H, W);
  for (Index i = 0; i < ph.labels.size(); ++i) {
    const TissueParams &p = ph.class_of(ph.labels.data()[i]).params;
    t1.data()[i] = p.t1_ms;
    t2.data()[i] = p.t2_ms;
    pd.data()[i] = p.pd;
  }
  io::save(st.output("labels.qtia"), io::to_array(ph.labels));
  io::save(st.output("truth_t1.qtia"), io::to_array(t1));
  io::save(st.output("truth_t2.qtia"), io::to_array(t2));
  io::save(st.output("truth_pd.qtia"), io::to_array(pd));
  io::save(st.output("truth_series.qtia"), io::to_array(x));
  io::save(st.output("coils.qtia"), io::to_array(coils.sensitivities));
  io::save(st.output("masks.qtia"), io::to_array(masks.mask));
  io::save(st.output("kspace.qtia"), io::to_array(ksp.y));
  {
    auto f = open_text(st.output("classes.csv"));
    f << "label,name,t1_ms,t2_ms,pd,velocity_mm_s\n";
    for (std::uint8_t l : ph.labels_present()) {
      const LabelClass &c = ph.class_of(l);
      f << int{l} << ',' << c.name << ',' << c.params.t1_ms << ',' << c.params.t2_ms << ',' << c.params.pd << ','
        << c.params.velocity_mm_s << '\n';
    }
  }
  {
    auto f = open_text(st.output("acquisition.csv"));
    f << "key,value\nnoise_sigma," << sigma << "\nsampled_fraction," << masks.sampled_fraction() << '\n';
  }
  st.finish();
  std::cout << "simulate: " << H << "x" << W << ", " << design.repetitions() << " frames, " << acq.coils
            << " coils, sampled fraction " << masks.sampled_fraction() << '\n';
}

void cmd_reconstruct(const ExperimentConfig &config, const fs::path &out) {
  config.require({"design", "recon"}, "reconstruct");
  Stage st("reconstruct", config, out);
  fs::path const kpath = st.input("simulate", "kspace.qtia");
  fs::path const cpath = st.input("simulate", "coils.qtia");
  fs::path const mpath = st.input("simulate", "masks.qtia");
  SequenceDesign const design = checked_sequence(config);

  Cx4 const y = io::as_tensor<Cx, 4>(io::load(kpath));
  CoilSet coils;
  coils.sensitivities = io::as_tensor<Cx, 3>(io::load(cpath));
  SamplingMask masks;
  masks.mask = io::as_tensor<std::uint8_t, 3>(io::load(mpath));
  if (y.dimension(0) != design.repetitions()) {
    throw InvalidArgument("reconstruct: k-space has " + std::to_string(y.dimension(0)) + " frames but the design has " +
                          std::to_string(design.repetitions()));
  }

  const ReconSection &rc = config.recon;
  InferenceGrid const egrid{log_spaced(100.0, 5000.0, rc.ensemble_n_t1), log_spaced(10.0, 2500.0, rc.ensemble_n_t2)};
  SignalEnsemble const ens = build_ensemble(design, ensemble_points(egrid, rc.ensemble_flow_mm_s), true);
  SubspaceBasis const basis = compute_basis(ens, rc.config.rank);
  ReconConfig cfg = rc.config;
  cfg.seed = derived_seed(config, SeedStream::recon);
  AdmmResult const res = admm_solve(y, basis, coils, masks, cfg);
  Cx3 const series = project_to_time(res.c, basis);

  io::save(st.output("basis.qtia"), io::to_array(basis.phi));
  io::save(st.output("coefficients.qtia"), io::to_array(res.c));
  io::save(st.output("series.qtia"), io::to_array(series));
  {
    auto f = open_text(st.output("residuals.csv"));
    write_residual_csv(f, res.log);
  }
  {
    auto f = open_text(st.output("basis.csv"));
    f << "key,value\natoms," << ens.atoms() << "\nrank," << basis.rank() << "\nenergy_fraction,"
      << basis.energy_fraction << "\nmax_projection_error," << max_projection_error(ens, basis) << '\n';
  }
  st.finish();
  std::cout << "reconstruct: rank " << basis.rank() << ", " << res.log.size() << " ADMM iterations, final primal "
            << res.log.back().primal_residual << '\n';
}

void cmd_infer(const ExperimentConfig &config, const fs::path &out) {
  config.require({"design", "inference"}, "infer");
  Stage st("infer", config, out);
  fs::path const spath = st.input("reconstruct", "series.qtia");
  fs::path const lpath = st.input("simulate", "labels.qtia");
  SequenceDesign const design = checked_sequence(config);
  Cx3 const series = io::as_tensor<Cx, 3>(io::load(spath));
  U8_2 const labels = io::as_tensor<std::uint8_t, 2>(io::load(lpath));
  U8_2 mask(labels.dimension(0), labels.dimension(1));
  for (Index i = 0; i < labels.size(); ++i) { mask.data()[i] = labels.data()[i] != 0 ? 1 : 0; }

  const InferenceSection &is = config.inference;
  InferenceOptions opt;
  opt.method = is.method;
  opt.sigma = is.sigma;
  opt.tmcmc.n_particles = is.n_particles;
  ParameterMaps const maps =
    infer_maps(series, design, is.grid(), opt, mask, derived_seed(config, SeedStream::inference));

  io::save(st.output("t1.qtia"), io::to_array(maps.t1_ms));
  io::save(st.output("t2.qtia"), io::to_array(maps.t2_ms));
  io::save(st.output("pd.qtia"), io::to_array(maps.pd));
  io::save(st.output("std_t1.qtia"), io::to_array(maps.std_t1_ms));
  io::save(st.output("std_t2.qtia"), io::to_array(maps.std_t2_ms));
  io::save_pgm(st.output("t1.pgm"), maps.t1_ms, {0.0, is.t1_max_ms});
  io::save_pgm(st.output("t2.pgm"), maps.t2_ms, {0.0, is.t2_max_ms});
  Re2 const pd_mag = magnitude(maps.pd);
  io::save_pgm(st.output("pd.pgm"), pd_mag, io::full_range(pd_mag));
  {
    auto f = open_text(st.output("inference.csv"));
    f << "key,value\nmethod," << to_string(is.method) << "\nsigma," << maps.sigma << '\n';
  }
  st.finish();
  std::cout << "infer: method " << to_string(is.method) << ", sigma " << maps.sigma << '\n';
}

void cmd_angio(const ExperimentConfig &config, const fs::path &out) {
  config.require({"design", "analysis"}, "angio");
  Stage st("angio", config, out);
  fs::path const spath = st.input("reconstruct", "series.qtia");
  SequenceDesign const design = checked_sequence(config);
  Cx3 const series = io::as_tensor<Cx, 3>(io::load(spath));
  const AnalysisSection &an = config.analysis;
  FrameRange const range =
    an.has_angio_range ? an.angio_range : FrameRange::last(series.dimension(0), an.angio_last_frames);

  Re2 const sum = angio_sum(series, range);
  Index const T = range.size(), H = series.dimension(1), W = series.dimension(2);
  Re3 mags(T, H, W);
  for (Index t = 0; t < T; ++t) {
    for (Index v = 0; v < H * W; ++v) { mags.data()[t * H * W + v] = std::abs(series.data()[(range.start + t) * H * W + v]); }
  }
  Re2 const projection = mip(mags, 0);

  io::save(st.output("angio.qtia"), io::to_array(sum));
  io::save_pgm(st.output("angio.pgm"), sum, io::full_range(sum));
  io::save_pgm(st.output("mip.pgm"), projection, io::full_range(projection));
  {
    auto f = open_text(st.output("frames.csv"));
    f << "time_ms,frame,file\n";
    for (double t : an.extract_times_ms) {
      ExtractedFrame const fr = extract_frame(series, t, design);
      std::ostringstream name;
      name << "frame_" << std::llround(t) << "ms.pgm";
      io::save_pgm(st.output(name.str()), fr.image, io::full_range(fr.image));
      f << t << ',' << fr.frame << ',' << name.str() << '\n';
    }
  }
  st.finish();
  std::cout << "angio: frames [" << range.start << ", " << range.end << "]\n";
}

void cmd_metrics(const ExperimentConfig &config, const fs::path &out) {
  config.require({"design", "analysis"}, "metrics");
  Stage st("metrics", config, out);
  U8_2 const labels = io::as_tensor<std::uint8_t, 2>(io::load(st.input("simulate", "labels.qtia")));
  Re2 const truth_t1 = io::as_tensor<double, 2>(io::load(st.input("simulate", "truth_t1.qtia")));
  Re2 const truth_t2 = io::as_tensor<double, 2>(io::load(st.input("simulate", "truth_t2.qtia")));
  auto const classes = read_classes(st.input("simulate", "classes.csv"));
  Re2 const t1 = io::as_tensor<double, 2>(io::load(st.input("infer", "t1.qtia")));
  Re2 const t2 = io::as_tensor<double, 2>(io::load(st.input("infer", "t2.qtia")));
  Re2 const s1 = io::as_tensor<double, 2>(io::load(st.input("infer", "std_t1.qtia")));
  Re2 const s2 = io::as_tensor<double, 2>(io::load(st.input("infer", "std_t2.qtia")));
  Re2 const angio = io::as_tensor<double, 2>(io::load(st.input("angio", "angio.qtia")));
  SequenceDesign const design = checked_sequence(config);
  double const t_acq = config.analysis.t_acq_s > 0.0 ? config.analysis.t_acq_s : design.duration_ms() / 1000.0;

  auto f = open_text(st.output("metrics.csv"));
  f << "class,label,velocity_mm_s,n_interior,true_t1_ms,true_t2_ms,median_t1_ms,median_t2_ms,median_rel_err_t1,"
       "median_rel_err_t2,mean_std_t1_ms,mean_std_t2_ms,efficiency_t1,efficiency_t2,angio_mean\n";
  std::vector<double> all_true_t1, all_est_t1, all_true_t2, all_est_t2;
  double vessel_angio = 0.0, sb_angio = 0.0;
  Index n_vessel = 0, n_sb = 0;
  for (const ClassRow &c : classes) {
    if (c.label == 0) { continue; }
    U8_2 const interior = interior_mask(labels, static_cast<std::uint8_t>(c.label), 1);
    std::vector<double> e1, e2, r1, r2, d1, d2;
    double sd1 = 0.0, sd2 = 0.0, ang = 0.0;
    for (Index i = 0; i < interior.size(); ++i) {
      if (!interior.data()[i]) { continue; }
      e1.push_back(t1.data()[i]);
      e2.push_back(t2.data()[i]);
      d1.push_back(std::abs(t1.data()[i] - c.t1) / c.t1);
      d2.push_back(std::abs(t2.data()[i] - c.t2) / c.t2);
      sd1 += s1.data()[i];
      sd2 += s2.data()[i];
      ang += angio.data()[i];
      if (c.velocity == 0.0) {
        all_true_t1.push_back(truth_t1.data()[i]);
        all_est_t1.push_back(t1.data()[i]);
        all_true_t2.push_back(truth_t2.data()[i]);
        all_est_t2.push_back(t2.data()[i]);
      }
    }
    auto const n = static_cast<double>(e1.size());
    auto eff = [&](const std::vector<double> &v) {
      if (v.size() < 2) { return std::nan(""); }
      return efficiency(Eigen::Map<const RealVec>(v.data(), static_cast<Index>(v.size())), t_acq);
    };
    f << c.name << ',' << c.label << ',' << c.velocity << ',' << e1.size() << ',' << c.t1 << ',' << c.t2 << ','
      << median(e1) << ',' << median(e2) << ',' << median(d1) << ',' << median(d2) << ',' << (n > 0 ? sd1 / n : 0.0)
      << ',' << (n > 0 ? sd2 / n : 0.0) << ',' << eff(e1) << ',' << eff(e2) << ',' << (n > 0 ? ang / n : 0.0)
      << '\n';
    if (c.velocity > 0.0) {
      vessel_angio += ang;
      n_vessel += static_cast<Index>(e1.size());
    } else if (c.name == "SB") {
      sb_angio = ang;
      n_sb = static_cast<Index>(e1.size());
    }
  }
  auto as_vec = [](const std::vector<double> &v) { return Eigen::Map<const RealVec>(v.data(), static_cast<Index>(v.size())); };
  auto g = open_text(st.output("summary.csv"));
  g << "metric,value\n";
  if (all_true_t1.size() >= 2) {
    g << "ccc_t1," << ccc(as_vec(all_est_t1), as_vec(all_true_t1)) << '\n';
    g << "ccc_t2," << ccc(as_vec(all_est_t2), as_vec(all_true_t2)) << '\n';
  }
  if (n_vessel > 0 && n_sb > 0) {
    g << "angio_vessel_mean," << vessel_angio / static_cast<double>(n_vessel) << '\n';
    g << "angio_sb_mean," << sb_angio / static_cast<double>(n_sb) << '\n';
  }
  g << "t_acq_s," << t_acq << '\n';
  f.close();
  g.close();
  st.finish();
  std::cout << "metrics: written to " << st.dir().string() << '\n';
}

const std::vector<std::string> &stage_names() {
  static const std::vector<std::string> names{"design", "simulate", "reconstruct", "infer", "angio", "metrics", "pipeline"};
  return names;
}

void cmd_pipeline(const ExperimentConfig &config, const fs::path &out) {
  cmd_simulate(config, out);
  cmd_reconstruct(config, out);
  cmd_infer(config, out);
  cmd_angio(config, out);
  cmd_metrics(config, out);
}

void run_stage(const std::string &name, const ExperimentConfig &config, const fs::path &out) {
  if (name == "design") { return cmd_design(config, out); }
  if (name == "simulate") { return cmd_simulate(config, out); }
  if (name == "reconstruct") { return cmd_reconstruct(config, out); }
  if (name == "infer") { return cmd_infer(config, out); }
  if (name == "angio") { return cmd_angio(config, out); }
  if (name == "metrics") { return cmd_metrics(config, out); }
  if (name == "pipeline") { return cmd_pipeline(config, out); }
  throw ConfigError("unknown command '" + name + "'");
}

} // namespace qti::cli

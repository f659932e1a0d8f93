#include "cli.hpp"

#include "lorid/analysis.hpp"
#include "lorid/attacks.hpp"
#include "lorid/denoiser.hpp"
#include "lorid/evaluation.hpp"
#include "lorid/io.hpp"
#include "lorid/purify.hpp"
#include "lorid/schedule.hpp"
#include "lorid/tucker.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace lorid::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigFlags {
  std::string path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_config_flags(CLI::App* sub, ConfigFlags& f, bool required) {
  auto* c = sub->add_option("--config", f.path, "Run configuration file (key=value lines)")
                ->check(CLI::ExistingFile);
  if (required) c->required();
  sub->add_option("--set", f.sets, "Override a config entry, e.g. --set t=50 (repeatable)");
  f.seed_opt = sub->add_option("--seed", f.seed, "Random seed; overrides the config seed");
}

RunConfig resolve_config(const ConfigFlags& f) {
  RunConfig cfg = f.path.empty() ? RunConfig{} : parse_config(std::filesystem::path(f.path));
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    apply_config_entry(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (f.seed_opt && f.seed_opt->count()) cfg.seed = f.seed;
  return cfg;
}

Schedule schedule_of(const RunConfig& cfg) {
  return make_linear_schedule(cfg.steps, cfg.beta_start, cfg.beta_end);
}

void emit(const CsvTable& table, const std::string& out_path, std::ostream& out) {
  if (!out_path.empty()) write_csv(std::filesystem::path(out_path), table);
  out << format_aligned(table);
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (int v : parse_int_list(text)) {
    if (v < 1) throw UsageError("layer sizes must be positive");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// --- gen-data -------------------------------------------------------------

struct GenDataOptions {
  std::string kind;
  std::size_t n = 0;
  std::size_t dim = 8;
  std::string out;
  std::string labels_out;
  ConfigFlags cfg;
};

int gen_data(const GenDataOptions& o, std::ostream& out) {
  const bool labeled = o.kind == "two-gaussians" || o.kind == "stripes";
  if (labeled && o.labels_out.empty())
    throw UsageError("--kind " + o.kind + " requires --labels-out");
  if (!labeled && !o.labels_out.empty())
    throw UsageError("--kind " + o.kind + " has no labels; drop --labels-out");
  const RunConfig cfg = resolve_config(o.cfg);
  Tensord data;
  if (o.kind == "gaussian") {
    data = gen_gaussian_dataset(o.dim, o.n, cfg.seed);
  } else if (o.kind == "two-point") {
    data = gen_two_point_dataset(o.n, cfg.seed);
  } else {
    const LabeledData d = o.kind == "stripes" ? gen_striped_images(o.n, cfg.seed)
                                              : gen_two_gaussians(o.n, cfg.seed);
    data = d.data;
    write_tensor(std::filesystem::path(o.labels_out), labels_to_tensor(d.labels));
  }
  write_tensor(std::filesystem::path(o.out), data);
  out << "wrote " << shape_string(data.shape()) << " to " << o.out << "\n";
  return kPass;
}

// --- train-denoiser ---------------------------------------------------------

struct TrainDenoiserOptions {
  std::string data;
  std::string out;
  std::string kind = "mlp";
  std::string basis_out;
  std::string report;
  int epochs = 10;
  std::string hidden = "64,64";
  double lr = 1e-3;
  double lr_floor = 1.0;
  std::size_t batch = 64;
  int t_min = 1;
  int t_max = 0;
  ConfigFlags cfg;
};

int train_denoiser(const TrainDenoiserOptions& o, std::ostream& out) {
  if (o.kind == "gaussian" && !o.report.empty())
    throw UsageError("--report applies to --kind mlp only");
  const RunConfig cfg = resolve_config(o.cfg);
  const Schedule schedule = schedule_of(cfg);
  const Tensord data = read_tensor(std::filesystem::path(o.data));
  if (data.order() < 2) throw UsageError("training data must be (N, ...)");
  if (!o.basis_out.empty() && data.order() != 4)
    throw UsageError("--basis-out needs (N, H, W, C) image data");

  if (o.kind == "gaussian") {
    const GaussianPrior prior = GaussianPrior::fit(data);
    save_prior(std::filesystem::path(o.out), prior);
    out << "fitted Gaussian prior, dim " << prior.dim() << "\n";
  } else {
    TrainHyperparams hp;
    hp.hidden = parse_sizes(o.hidden);
    hp.learning_rate = o.lr;
    hp.lr_floor = o.lr_floor;
    hp.epochs = o.epochs;
    hp.batch_size = o.batch;
    hp.t_min = o.t_min;
    hp.t_max = o.t_max;
    Rng rng = make_rng(cfg.seed, 0);
    const TrainedDenoiser trained = train_mlp_denoiser(data, schedule, hp, rng);
    save_mlp_denoiser(std::filesystem::path(o.out), trained.denoiser);
    out << "gradient check residual " << format_number(trained.report.gradient_check_residual)
        << "\nfinal loss " << format_number(trained.report.final_loss) << "\n";
    if (!o.report.empty()) {
      CsvTable csv{{"epoch", "loss"}, {}};
      for (std::size_t e = 0; e < trained.report.epoch_losses.size(); ++e)
        csv.add_row({std::to_string(e + 1), format_number(trained.report.epoch_losses[e])});
      write_csv(std::filesystem::path(o.report), csv);
    }
  }
  if (!o.basis_out.empty()) {
    const TensorizationLayout layout{data.dim(1), data.dim(2), data.dim(3), cfg.patch};
    const TuckerBasis basis = fit_basis(data, layout, cfg.rank_policy());
    save_basis(std::filesystem::path(o.basis_out), basis);
    out << "tucker ranks";
    for (std::size_t r : basis.ranks) out << " " << r;
    out << "\n";
  }
  return kPass;
}

// --- train-classifier -------------------------------------------------------

struct TrainClassifierOptions {
  std::string data;
  std::string labels;
  std::string out;
  int epochs = 40;
  std::string hidden = "32";
  double lr = 5e-3;
  std::size_t batch = 32;
  ConfigFlags cfg;
};

int train_classifier_cmd(const TrainClassifierOptions& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o.cfg);
  const Tensord data = read_tensor(std::filesystem::path(o.data));
  const std::vector<int> labels = tensor_to_labels(read_tensor(std::filesystem::path(o.labels)));
  ClassifierHyperparams hp;
  hp.hidden = parse_sizes(o.hidden);
  hp.learning_rate = o.lr;
  hp.epochs = o.epochs;
  hp.batch_size = o.batch;
  Rng rng = make_rng(cfg.seed, 0);
  const TrainedClassifier trained = train_classifier(data, labels, hp, rng);
  save_classifier(std::filesystem::path(o.out), trained.classifier);
  out << "gradient check residual " << format_number(trained.report.gradient_check_residual)
      << "\ntrain accuracy " << format_number(trained.report.train_accuracy) << "\n";
  return kPass;
}

// --- purify -----------------------------------------------------------------

struct PurifyOptions {
  std::string input;
  std::string denoiser;
  std::string basis;
  std::string out;
  std::string reference;
  std::string trace;
  bool batch = false;
  ConfigFlags cfg;
};

int purify_cmd(const PurifyOptions& o, std::ostream& out) {
  if (o.batch && !o.reference.empty())
    throw UsageError("--reference applies to single inputs, not --batch");
  if (!o.trace.empty() && o.reference.empty()) throw UsageError("--trace requires --reference");
  const RunConfig cfg = resolve_config(o.cfg);
  if (cfg.use_tucker && o.basis.empty()) throw UsageError("use_tucker=true requires --basis");
  const Schedule schedule = schedule_of(cfg);
  LoridConfig lcfg = cfg.lorid_config();
  if (!o.basis.empty()) lcfg.basis = load_basis(std::filesystem::path(o.basis));
  try {
    lcfg.validate(schedule);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto den = load_denoiser(std::filesystem::path(o.denoiser), schedule);
  const Tensord x = read_tensor(std::filesystem::path(o.input));

  if (o.batch) {
    const Tensord y = lorid_purify_batch(x, lcfg, *den, schedule);
    write_tensor(std::filesystem::path(o.out), y);
    out << "purified " << x.dim(0) << " samples\n";
    return kPass;
  }
  std::optional<Tensord> ref;
  if (!o.reference.empty()) ref = read_tensor(std::filesystem::path(o.reference));
  Rng rng = make_rng(cfg.seed, 0);
  const PurifyResult res = lorid_purify(x, lcfg, *den, schedule, rng, ref ? &*ref : nullptr);
  write_tensor(std::filesystem::path(o.out), res.output);
  if (ref) {
    CsvTable csv{{"loop", "distance"}, {}};
    for (std::size_t l = 0; l < res.trace.loop_distances.size(); ++l)
      csv.add_row({std::to_string(l + 1), format_number(res.trace.loop_distances[l])});
    emit(csv, o.trace, out);
  }
  return kPass;
}

// --- curves -----------------------------------------------------------------

struct CurvesOptions {
  std::string kind;
  std::string out;
  ConfigFlags cfg;
};

int curves(const CurvesOptions& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o.cfg);
  const Schedule schedule = schedule_of(cfg);
  CsvTable csv;
  if (o.kind == "fig2") {
    if (cfg.loops_max < 1) throw UsageError("L_max must be >= 1");
    csv.columns = {"effective_t", "L", "t_over_L", "value"};
    std::vector<int> loops(static_cast<std::size_t>(cfg.loops_max));
    for (int l = 1; l <= cfg.loops_max; ++l) loops[static_cast<std::size_t>(l - 1)] = l;
    for (int et : cfg.effective_t) {
      schedule.check_step(et);
      for (const CurvePoint& p : loop_bound_curve(schedule, et, loops))
        csv.add_row({std::to_string(et), std::to_string(p.loops), std::to_string(p.t_over_L),
                     format_number(p.value)});
    }
  } else if (o.kind == "mmse") {
    csv.columns = {"snr", "mmse_gaussian", "mmse_binary"};
    for (double snr : cfg.snr_grid)
      csv.add_row({format_number(snr), format_number(mmse_gaussian(snr)),
                   format_number(mmse_binary(snr))});
  } else {
    csv.columns = {"t", "alpha_bar", "snr"};
    for (int t = 1; t <= schedule.steps(); ++t)
      csv.add_row({std::to_string(t), format_number(schedule.alpha_bar(t)),
                   format_number(effective_snr(schedule, t))});
  }
  write_csv(std::filesystem::path(o.out), csv);
  out << "wrote " << csv.rows.size() << " rows to " << o.out << "\n";
  return kPass;
}

// --- verify -----------------------------------------------------------------

struct VerifyOptions {
  std::string theorem;
  std::string out;
  bool identical = false;
  ConfigFlags cfg;
};

struct Outcome {
  bool pass = true;
  CsvTable table;
};

const char* verdict(bool ok) { return ok ? "pass" : "FAIL"; }

Outcome verify_kl(const RunConfig& cfg, bool identical) {
  const Schedule schedule = schedule_of(cfg);
  Outcome res;
  res.table.columns = {"family", "pair", "kl_first", "kl_last", "max_increase", "tolerance",
                       "result"};
  Rng rng = make_rng(cfg.seed, 1);
  std::vector<int> all_steps;
  for (int t = 0; t <= schedule.steps(); ++t) all_steps.push_back(t);
  for (int i = 0; i < 100; ++i) {
    const GaussianDist p = random_gaussian(cfg.dim, rng);
    const GaussianDist q = identical ? p : random_gaussian(cfg.dim, rng);
    const auto seq = kl_forward_sequence(p, q, schedule, all_steps);
    const bool ok = non_increasing(seq, 1e-12);
    res.pass = res.pass && ok;
    res.table.add_row({"gaussian", std::to_string(i), format_number(seq.front()),
                       format_number(seq.back()), format_number(max_increase(seq)), "1e-12",
                       verdict(ok)});
  }
  std::vector<int> coarse;
  for (int t = 0; t <= schedule.steps(); t += 50) coarse.push_back(t);
  const Grid1D grid;
  const auto pairs = reference_density_pairs(grid);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Vectord& p = pairs[i].first;
    const Vectord& q = identical ? p : pairs[i].second;
    const auto seq = kl_quadrature_sequence(grid, p, q, schedule, coarse);
    const bool ok = non_increasing(seq, 1e-6);
    res.pass = res.pass && ok;
    res.table.add_row({"quadrature", std::to_string(i), format_number(seq.front()),
                       format_number(seq.back()), format_number(max_increase(seq)), "1e-6",
                       verdict(ok)});
  }
  return res;
}

CsvTable bound_table() {
  return {{"t", "L", "eps_norm", "mmse", "delta_est", "lower", "empirical", "upper",
           "tolerance", "result"},
          {}};
}

void add_bound_row(Outcome& res, const BoundReport& r, double eps_norm, bool ok) {
  res.pass = res.pass && ok;
  res.table.add_row({std::to_string(r.t), std::to_string(r.loops), format_number(eps_norm),
                     format_number(r.mmse), format_number(r.delta_ddpm_est),
                     format_number(r.lower), format_number(r.empirical), format_number(r.upper),
                     format_number(r.tolerance), verdict(ok)});
}

// The lower-bound, two-sided and clean checks share the Gaussian one-shot setup.
Outcome verify_gaussian_bounds(const RunConfig& cfg, const std::string& which) {
  const Schedule schedule = schedule_of(cfg);
  const GaussianPrior prior = GaussianPrior::standard(cfg.dim);
  const GaussianOracleDenoiser den(prior, schedule);
  Outcome res;
  res.table = bound_table();
  Rng rng = make_rng(cfg.seed, 2);
  const std::vector<double> eps_list = which == "cor1" ? std::vector<double>{0.0} : cfg.eps_norms;
  for (double eps : eps_list)
    for (int t : cfg.t_list) {
      BoundSetup setup;
      setup.prior = &prior;
      setup.denoiser = &den;
      setup.schedule = &schedule;
      setup.eps_a = uniform_sign_noise({static_cast<std::size_t>(cfg.dim)}, eps, rng).delta.values();
      const BoundReport r = verify_bounds(setup, t, cfg.trials, rng);
      bool ok = false;
      if (which == "2") {
        ok = r.lower_ok;
      } else if (which == "3") {
        ok = r.holds();
      } else {
        ok = r.delta_ddpm_est < 0.01 * r.mmse && r.empirical >= r.mmse - r.tolerance &&
             r.empirical <= r.mmse + r.delta_ddpm_est + r.tolerance;
      }
      add_bound_row(res, r, eps, ok);
    }
  return res;
}

Outcome verify_loops(const RunConfig& cfg) {
  const Schedule schedule = schedule_of(cfg);
  Outcome res;
  res.table.columns = {"check", "effective_t", "L", "value", "result"};
  std::vector<int> loops;
  for (int l = 1; l <= cfg.loops_max; ++l) loops.push_back(l);
  for (int et : cfg.effective_t) {
    const auto curve = loop_bound_curve(schedule, et, loops);
    for (std::size_t i = 0; i < curve.size(); ++i) {
      const bool ok = i == 0 || curve[i].value < curve[i - 1].value;
      res.pass = res.pass && ok;
      res.table.add_row({"curve", std::to_string(et), std::to_string(curve[i].loops),
                         format_number(curve[i].value), verdict(ok)});
    }
  }
  if (cfg.loops > 1) {
    const GaussianPrior prior = GaussianPrior::standard(cfg.dim);
    const GaussianOracleDenoiser den(prior, schedule);
    BoundSetup setup;
    setup.prior = &prior;
    setup.denoiser = &den;
    setup.schedule = &schedule;
    setup.recovery = Recovery::ancestral;
    Rng rng = make_rng(cfg.seed, 3);
    const BoundReport single = verify_bounds(setup, cfg.t, cfg.trials, rng);
    setup.loops = cfg.loops;
    const BoundReport looped = verify_bounds(setup, cfg.t, cfg.trials, rng);
    const bool ok = looped.empirical + looped.tolerance < single.empirical - single.tolerance;
    res.pass = res.pass && ok;
    res.table.add_row({"empirical", std::to_string(cfg.t), "1", format_number(single.empirical),
                       "reference"});
    res.table.add_row({"empirical", std::to_string(cfg.t), std::to_string(cfg.loops),
                       format_number(looped.empirical), verdict(ok)});
  }
  return res;
}

Outcome verify_tucker(const RunConfig& cfg) {
  const Schedule schedule = schedule_of(cfg);
  const TensorizationLayout layout{8, 8, 1, cfg.patch};
  Rng rng = make_rng(cfg.seed, 4);
  const TuckerBasis truth = random_tucker_basis(layout, {1, 1, 4, 1}, rng);
  const GaussianPrior prior = tucker_gaussian_prior(truth, 1.0, 0.1);
  Tensord samples({2000, 8, 8, 1});
  for (std::size_t i = 0; i < 2000; ++i)
    samples.values().segment(static_cast<Eigen::Index>(i * 64), 64) = prior.sample(rng);
  const TuckerBasis basis = fit_basis(samples, layout, cfg.rank_policy());
  const GaussianOracleDenoiser den(prior, schedule);
  Outcome res;
  res.table = bound_table();
  for (double eps : cfg.eps_norms)
    for (int t : cfg.t_list) {
      BoundSetup setup;
      setup.prior = &prior;
      setup.denoiser = &den;
      setup.schedule = &schedule;
      setup.basis = &basis;
      setup.loops = cfg.loops;
      setup.eps_a = discarded_subspace_noise(basis, eps * 8.0, rng).delta.values();
      if (t / cfg.loops < 1) throw UsageError("t / L is below one step");
      const BoundReport r = verify_bounds(setup, t, cfg.trials, rng);
      add_bound_row(res, r, eps, r.upper_ok);
    }
  return res;
}

int verify(const VerifyOptions& o, std::ostream& out) {
  if (o.identical && o.theorem != "1") throw UsageError("--identical applies to --theorem 1");
  const RunConfig cfg = resolve_config(o.cfg);
  if (cfg.dim < 1) throw UsageError("dim must be >= 1");
  if (cfg.trials < 1) throw UsageError("trials must be >= 1");
  Outcome res;
  if (o.theorem == "1") res = verify_kl(cfg, o.identical);
  else if (o.theorem == "4") res = verify_loops(cfg);
  else if (o.theorem == "5") res = verify_tucker(cfg);
  else res = verify_gaussian_bounds(cfg, o.theorem);
  emit(res.table, o.out, out);
  out << "theorem " << o.theorem << ": " << (res.pass ? "PASS" : "FAIL") << "\n";
  return res.pass ? kPass : kCheckFailure;
}

// --- attack-eval / calibrate --------------------------------------------------

struct AttackOptions {
  std::string data;
  std::string labels;
  std::string classifier;
  std::string denoiser;
  std::string basis;
  std::string out;
  std::string norm = "linf";
  std::string attack = "pgd";
  double epsilon = 0;
  int steps = 20;
  double step_size = 0;
  int repeats = 1;
  double range_lo = 0.0;
  double range_hi = 1.0;
  std::string t_grid;
  std::string loop_grid;
  ConfigFlags cfg;
};

void add_attack_flags(CLI::App* sub, AttackOptions& o) {
  sub->add_option("--data", o.data, "Evaluation inputs (N, ...)")->required()->check(CLI::ExistingFile);
  sub->add_option("--labels", o.labels, "Labels tensor")->required()->check(CLI::ExistingFile);
  sub->add_option("--classifier", o.classifier, "Classifier bundle")->required()->check(CLI::ExistingFile);
  sub->add_option("--denoiser", o.denoiser, "Denoiser or prior bundle")->required()->check(CLI::ExistingFile);
  sub->add_option("--basis", o.basis, "Tucker basis bundle; enables the tf and lorid variants")
      ->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "CSV output path");
  sub->add_option("--epsilon", o.epsilon, "Attack budget")->required()->check(CLI::NonNegativeNumber);
  sub->add_option("--norm", o.norm, "Budget norm")->check(CLI::IsMember({"linf", "l2"}))->capture_default_str();
  sub->add_option("--attack", o.attack, "Attack kind")->check(CLI::IsMember({"pgd", "fgsm"}))->capture_default_str();
  sub->add_option("--steps", o.steps, "PGD steps")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--step-size", o.step_size, "PGD step size; 0 selects 2.5 eps / steps")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  sub->add_option("--repeats", o.repeats, "Purification draws per input")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--range-lo", o.range_lo, "Lowest valid input value")->capture_default_str();
  sub->add_option("--range-hi", o.range_hi, "Highest valid input value")->capture_default_str();
  add_config_flags(sub, o.cfg, true);
}

struct AttackSetup {
  RunConfig cfg;
  Schedule schedule;
  Tensord data;
  std::vector<int> labels;
  ToyClassifier clf;
  std::unique_ptr<Denoiser> den;
  LoridConfig lcfg;
  AttackBudget budget;
  ValueRange range;
};

AttackSetup load_attack_setup(const AttackOptions& o) {
  if (!(o.range_lo < o.range_hi)) throw UsageError("--range-lo must be below --range-hi");
  const RunConfig cfg = resolve_config(o.cfg);
  Schedule schedule = schedule_of(cfg);
  Tensord data = read_tensor(std::filesystem::path(o.data));
  std::vector<int> labels = tensor_to_labels(read_tensor(std::filesystem::path(o.labels)));
  if (data.order() < 2 || data.dim(0) != labels.size())
    throw UsageError("data must be (N, ...) with one label per sample");
  ToyClassifier clf = load_classifier(std::filesystem::path(o.classifier));
  auto den = load_denoiser(std::filesystem::path(o.denoiser), schedule);
  LoridConfig lcfg = cfg.lorid_config();
  if (!o.basis.empty()) lcfg.basis = load_basis(std::filesystem::path(o.basis));
  lcfg.use_tucker = lcfg.basis.has_value();
  AttackBudget budget{o.norm == "l2" ? NormKind::l2 : NormKind::linf, o.epsilon, o.steps,
                      o.step_size};
  return {cfg, std::move(schedule), std::move(data), std::move(labels), std::move(clf),
          std::move(den), std::move(lcfg), budget, {o.range_lo, o.range_hi}};
}

AttackKind attack_kind(const std::string& name) {
  return name == "fgsm" ? AttackKind::fgsm : AttackKind::pgd;
}

int attack_eval(const AttackOptions& o, std::ostream& out) {
  AttackSetup s = load_attack_setup(o);
  try {
    s.lcfg.validate(s.schedule);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto purifiers = ablation_purifiers(s.lcfg, *s.den, s.schedule);
  const AccuracyTable table = evaluate(s.clf, purifiers, s.data, s.labels, s.budget,
                                       attack_kind(o.attack), s.cfg.seed, o.repeats, s.range);
  emit(accuracy_csv(table), o.out, out);
  return kPass;
}

int calibrate_cmd(const AttackOptions& o, std::ostream& out) {
  const std::vector<int> ts = parse_int_list(o.t_grid);
  const std::vector<int> ls = parse_int_list(o.loop_grid);
  AttackSetup s = load_attack_setup(o);
  for (int t : ts)
    if (t < 1 || t > s.schedule.steps()) throw UsageError("--t-grid entries must lie in [1, T]");
  for (int l : ls)
    if (l < 1) throw UsageError("--L-grid entries must be >= 1");
  const Tensord attacked = attack_batch(s.clf, s.data, s.labels, s.budget,
                                        attack_kind(o.attack), s.cfg.seed, s.range);
  const Calibration cal = calibrate(s.clf, s.lcfg, *s.den, s.schedule, s.data, attacked, s.labels,
                                    ts, ls, mix_seed(s.cfg.seed, 0xca1), o.repeats);
  emit(calibration_csv(cal), o.out, out);
  const auto& best = cal.cells[cal.recommended];
  out << "recommended t=" << best.t << " L=" << best.loops << "\n";
  return kPass;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-rank iterative diffusion purification laboratory", "lorid"};
  app.require_subcommand(1, 1);
  app.fallthrough(false);

  GenDataOptions gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset as a tensor file");
  gen->add_option("--kind", gd.kind, "Dataset family")
      ->required()
      ->check(CLI::IsMember({"gaussian", "two-point", "two-gaussians", "stripes"}));
  gen->add_option("--n", gd.n, "Number of samples")->required()->check(CLI::PositiveNumber);
  gen->add_option("--dim", gd.dim, "Dimension for --kind gaussian")
      ->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--out", gd.out, "Output tensor file")->required();
  gen->add_option("--labels-out", gd.labels_out, "Label tensor file (labeled kinds)");
  add_config_flags(gen, gd.cfg, false);

  TrainDenoiserOptions td;
  auto* tden = app.add_subcommand("train-denoiser", "Fit a noise predictor to a dataset");
  tden->add_option("--data", td.data, "Training data (N, ...)")->required()->check(CLI::ExistingFile);
  tden->add_option("--out", td.out, "Output denoiser bundle")->required();
  tden->add_option("--kind", td.kind, "mlp (trained network) or gaussian (fitted prior oracle)")
      ->check(CLI::IsMember({"mlp", "gaussian"}))->capture_default_str();
  tden->add_option("--basis-out", td.basis_out, "Also fit and save a Tucker basis (image data)");
  tden->add_option("--report", td.report, "CSV of per-epoch losses (mlp)");
  tden->add_option("--epochs", td.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  tden->add_option("--hidden", td.hidden, "Hidden layer sizes, comma separated")->capture_default_str();
  tden->add_option("--lr", td.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  tden->add_option("--lr-floor", td.lr_floor, "Final learning rate as a fraction of --lr (cosine decay)")
      ->check(CLI::Range(1e-6, 1.0))
      ->capture_default_str();
  tden->add_option("--batch", td.batch, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
  tden->add_option("--t-min", td.t_min, "Smallest training step")->check(CLI::PositiveNumber)->capture_default_str();
  tden->add_option("--t-max", td.t_max, "Largest training step; 0 means T")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  add_config_flags(tden, td.cfg, false);

  TrainClassifierOptions tc;
  auto* tcls = app.add_subcommand("train-classifier", "Train the softmax toy classifier");
  tcls->add_option("--data", tc.data, "Training inputs (N, ...)")->required()->check(CLI::ExistingFile);
  tcls->add_option("--labels", tc.labels, "Label tensor")->required()->check(CLI::ExistingFile);
  tcls->add_option("--out", tc.out, "Output classifier bundle")->required();
  tcls->add_option("--epochs", tc.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  tcls->add_option("--hidden", tc.hidden, "Hidden layer sizes, comma separated")->capture_default_str();
  tcls->add_option("--lr", tc.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  tcls->add_option("--batch", tc.batch, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
  add_config_flags(tcls, tc.cfg, false);

  PurifyOptions pu;
  auto* pur = app.add_subcommand("purify", "Run LoRID purification on a tensor");
  pur->add_option("--input", pu.input, "Input tensor")->required()->check(CLI::ExistingFile);
  pur->add_option("--denoiser", pu.denoiser, "Denoiser or prior bundle")->required()->check(CLI::ExistingFile);
  pur->add_option("--basis", pu.basis, "Tucker basis bundle")->check(CLI::ExistingFile);
  pur->add_option("--out", pu.out, "Output tensor file")->required();
  pur->add_option("--reference", pu.reference, "Clean reference for per-loop distances")
      ->check(CLI::ExistingFile);
  pur->add_option("--trace", pu.trace, "CSV of per-loop distances (needs --reference)");
  pur->add_flag("--batch", pu.batch, "Treat the first dimension as independent samples");
  add_config_flags(pur, pu.cfg, true);

  CurvesOptions cu;
  auto* cur = app.add_subcommand("curves", "Emit analysis curves as CSV");
  cur->add_option("--kind", cu.kind, "fig2: loop curve; mmse: MMSE vs snr; snr: snr vs t")
      ->required()
      ->check(CLI::IsMember({"fig2", "mmse", "snr"}));
  cur->add_option("--out", cu.out, "CSV output path")->required();
  add_config_flags(cur, cu.cfg, true);

  VerifyOptions ve;
  auto* ver = app.add_subcommand("verify", "Run a numerical theorem check");
  ver->add_option("--theorem", ve.theorem, "1 KL decay, 2 lower bound, 3 two-sided bound, 4 loop curve, 5 Tucker bound, cor1 clean MMSE")
      ->required()
      ->check(CLI::IsMember({"1", "2", "3", "4", "5", "cor1"}));
  ver->add_option("--out", ve.out, "CSV report path");
  ver->add_flag("--identical", ve.identical, "KL check with both distributions equal");
  add_config_flags(ver, ve.cfg, true);

  AttackOptions ae;
  auto* att = app.add_subcommand("attack-eval", "Accuracy table under a black-box attack");
  add_attack_flags(att, ae);

  AttackOptions ca;
  auto* cal = app.add_subcommand("calibrate", "Sweep (t, L) and recommend a setting");
  add_attack_flags(cal, ca);
  cal->add_option("--t-grid", ca.t_grid, "Comma separated t values")->required();
  cal->add_option("--L-grid", ca.loop_grid, "Comma separated L values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kPass : kUsageError;
  }

  try {
    if (*gen) return gen_data(gd, out);
    if (*tden) return train_denoiser(td, out);
    if (*tcls) return train_classifier_cmd(tc, out);
    if (*pur) return purify_cmd(pu, out);
    if (*cur) return curves(cu, out);
    if (*ver) return verify(ve, out);
    if (*att) return attack_eval(ae, out);
    if (*cal) return calibrate_cmd(ca, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }
  return kUsageError;
}

}  // namespace lorid::cli

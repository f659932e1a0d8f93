#include "lorid/evaluation.hpp"

#include <algorithm>
#include <stdexcept>

namespace lorid {

Purifier identity_purifier() {
  return [](const Tensord& x, Rng&) { return x; };
}

Purifier tf_purifier(const TuckerBasis& basis) {
  return [basis](const Tensord& x, Rng&) { return tf_apply(x, basis); };
}

Purifier lorid_purifier(const LoridConfig& cfg, const Denoiser& denoiser,
                        const Schedule& schedule) {
  cfg.validate(schedule);
  return [cfg, &denoiser, &schedule](const Tensord& x, Rng& rng) {
    return lorid_purify(x, cfg, denoiser, schedule, rng).output;
  };
}

std::vector<NamedPurifier> ablation_purifiers(const LoridConfig& cfg, const Denoiser& denoiser,
                                              const Schedule& schedule) {
  LoridConfig single = cfg;
  single.use_tucker = false;
  single.loops = 1;
  LoridConfig loop = cfg;
  loop.use_tucker = false;
  std::vector<NamedPurifier> out{{"none", identity_purifier()}};
  if (cfg.basis) out.push_back({"tf", tf_purifier(*cfg.basis)});
  out.push_back({"single", lorid_purifier(single, denoiser, schedule)});
  out.push_back({"loop", lorid_purifier(loop, denoiser, schedule)});
  if (cfg.basis) {
    LoridConfig full = cfg;
    full.use_tucker = true;
    out.push_back({"lorid", lorid_purifier(full, denoiser, schedule)});
  }
  return out;
}

std::size_t recommend(const std::vector<CalibrationCell>& cells, double clean_slack) {
  if (cells.empty()) throw std::invalid_argument("no calibration cells");
  double best_clean = 0;
  for (const auto& c : cells) best_clean = std::max(best_clean, c.clean_accuracy);
  std::size_t pick = cells.size();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].clean_accuracy < best_clean - clean_slack - 1e-12) continue;
    if (pick == cells.size() || cells[i].robust_accuracy > cells[pick].robust_accuracy) pick = i;
  }
  return pick;
}

Calibration calibrate(const ToyClassifier& clf, const LoridConfig& base,
                      const Denoiser& denoiser, const Schedule& schedule, const Tensord& data,
                      const Tensord& attacked, const std::vector<int>& labels,
                      const std::vector<int>& t_grid, const std::vector<int>& loop_grid,
                      std::uint64_t seed, int repeats) {
  if (t_grid.empty() || loop_grid.empty()) throw std::invalid_argument("empty calibration grid");
  Calibration cal;
  for (int t : t_grid)
    for (int loops : loop_grid) {
      if (loops > t) continue;
      LoridConfig cfg = base;
      cfg.t = t;
      cfg.loops = loops;
      cfg.use_tucker = base.basis.has_value();
      const std::vector<NamedPurifier> ps{{"lorid", lorid_purifier(cfg, denoiser, schedule)}};
      const AccuracyTable tab =
          evaluate_attacked(clf, ps, data, attacked, labels, seed, repeats);
      cal.cells.push_back({t, loops, tab.rows[0].clean_accuracy, tab.rows[0].robust_accuracy});
    }
  if (cal.cells.empty()) throw std::invalid_argument("every calibration cell has L > t");
  cal.recommended = recommend(cal.cells);
  return cal;
}

CsvTable accuracy_csv(const AccuracyTable& table) {
  CsvTable csv{{"variant", "clean_accuracy", "robust_accuracy"}, {}};
  csv.add_row({"standard", format_number(table.standard_accuracy),
               format_number(table.standard_accuracy)});
  csv.add_row({"attacked", format_number(table.standard_accuracy),
               format_number(table.attacked_accuracy)});
  for (const auto& r : table.rows)
    csv.add_row({r.variant, format_number(r.clean_accuracy), format_number(r.robust_accuracy)});
  return csv;
}

CsvTable calibration_csv(const Calibration& cal) {
  CsvTable csv{{"t", "L", "clean_accuracy", "robust_accuracy", "recommended"}, {}};
  for (std::size_t i = 0; i < cal.cells.size(); ++i) {
    const auto& c = cal.cells[i];
    csv.add_row({std::to_string(c.t), std::to_string(c.loops), format_number(c.clean_accuracy),
                  format_number(c.robust_accuracy), i == cal.recommended ? "1" : "0"});
  }
  return csv;
}

}  // namespace lorid

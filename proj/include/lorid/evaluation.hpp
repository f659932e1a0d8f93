#pragma once

#include "lorid/attacks.hpp"
#include "lorid/denoiser.hpp"
#include "lorid/io.hpp"
#include "lorid/purify.hpp"
#include "lorid/schedule.hpp"

#include <cstdint>
#include <vector>

namespace lorid {

// Purifiers hold references to the denoiser and schedule; keep both alive
// while the purifier is in use.
Purifier identity_purifier();
Purifier tf_purifier(const TuckerBasis& basis);
Purifier lorid_purifier(const LoridConfig& cfg, const Denoiser& denoiser,
                        const Schedule& schedule);

/// The ablation set at cfg.t and cfg.loops: none, tf, single, loop, lorid.
/// tf and lorid are present only when cfg.basis is set.
std::vector<NamedPurifier> ablation_purifiers(const LoridConfig& cfg, const Denoiser& denoiser,
                                              const Schedule& schedule);

struct CalibrationCell {
  int t = 0;
  int loops = 1;
  double clean_accuracy = 0;
  double robust_accuracy = 0;
};

struct Calibration {
  std::vector<CalibrationCell> cells;  // t-major over the grids
  std::size_t recommended = 0;
};

/// Highest robust accuracy among cells whose clean accuracy is within
/// `clean_slack` of the best clean accuracy; ties go to the earlier cell.
std::size_t recommend(const std::vector<CalibrationCell>& cells, double clean_slack = 0.03);

/// Evaluates LoRID (with TF when base.basis is set) over t_grid x L_grid on
/// fixed clean and attacked inputs. Cells with L > t are skipped.
Calibration calibrate(const ToyClassifier& clf, const LoridConfig& base,
                      const Denoiser& denoiser, const Schedule& schedule, const Tensord& data,
                      const Tensord& attacked, const std::vector<int>& labels,
                      const std::vector<int>& t_grid, const std::vector<int>& loop_grid,
                      std::uint64_t seed, int repeats = 1);

/// Columns: variant, clean_accuracy, robust_accuracy. The first two rows are
/// "standard" (no attack, no purifier) and "attacked" (no purifier).
CsvTable accuracy_csv(const AccuracyTable& table);
/// Columns: t, L, clean_accuracy, robust_accuracy, recommended.
CsvTable calibration_csv(const Calibration& cal);

}  // namespace lorid

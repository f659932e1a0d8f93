#pragma once

#include "lorid/mlp.hpp"
#include "lorid/rng.hpp"
#include "lorid/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lorid {

struct ClassifierHyperparams {
  std::vector<std::size_t> hidden = {32};
  Activation activation = Activation::tanh;
  double learning_rate = 5e-3;
  double lr_floor = 1.0;  // final learning rate as a fraction of the initial one
  int epochs = 40;
  std::size_t batch_size = 32;
  std::size_t gradient_check_params = 32;
};

/// Softmax classifier over flattened samples.
class ToyClassifier {
 public:
  ToyClassifier(Mlp net, std::size_t classes);

  /// Class probabilities, one column per input column.
  Matrixd probabilities(const Matrixd& x) const;
  int predict(const Tensord& x) const;
  /// Labels for an (N, ...) batch.
  std::vector<int> predict_batch(const Tensord& batch) const;

  struct LossGradients {
    double loss = 0;  // mean cross-entropy over the batch
    Mlp::Gradients grads;
  };
  LossGradients loss_and_gradients(const Matrixd& x, std::span<const int> labels) const;
  /// Gradient of the cross-entropy of `label` with respect to the input.
  Tensord input_gradient(const Tensord& x, int label) const;

  const Mlp& network() const { return net_; }
  Mlp& network() { return net_; }
  std::size_t classes() const { return classes_; }
  std::size_t input_dim() const { return net_.input_size(); }

 private:
  Mlp net_;
  std::size_t classes_;
};

struct ClassifierReport {
  std::vector<double> epoch_losses;
  double gradient_check_residual = 0;
  double train_accuracy = 0;
};

struct TrainedClassifier {
  ToyClassifier classifier;
  ClassifierReport report;
};

/// Cross-entropy training with Adam. `data` is (N, ...), labels in [0, K).
/// Rejects fewer than two distinct classes; throws on divergence.
TrainedClassifier train_classifier(const Tensord& data, const std::vector<int>& labels,
                                   const ClassifierHyperparams& params, Rng& rng);

double accuracy(const ToyClassifier& clf, const Tensord& data, const std::vector<int>& labels);

enum class NormKind { linf, l2 };

struct AttackBudget {
  NormKind norm = NormKind::linf;
  double epsilon = 8.0 / 255.0;
  int steps = 10;
  double step_size = 0;  // 0 selects 2.5 * epsilon / steps

  void validate() const;
  double effective_step() const { return step_size > 0 ? step_size : 2.5 * epsilon / steps; }
};

struct ValueRange {
  double lo = 0.0;
  double hi = 1.0;
};

struct AttackResult {
  Tensord x_adv;
  bool zero_gradient = false;  // the input was returned unchanged
};

AttackResult fgsm(const ToyClassifier& clf, const Tensord& x, int label,
                  const AttackBudget& budget, const ValueRange& range = {});
/// Random start inside the budget ball, then `steps` projected ascent steps.
AttackResult pgd(const ToyClassifier& clf, const Tensord& x, int label,
                 const AttackBudget& budget, Rng& rng, const ValueRange& range = {});

enum class AttackKind { fgsm, pgd };

/// Attacks every sample of an (N, ...) batch; sample i uses stream i of seed.
Tensord attack_batch(const ToyClassifier& clf, const Tensord& data,
                     const std::vector<int>& labels, const AttackBudget& budget,
                     AttackKind kind, std::uint64_t seed, const ValueRange& range = {});

/// A purification front-end applied to one sample.
using Purifier = std::function<Tensord(const Tensord&, Rng&)>;

struct NamedPurifier {
  std::string name;
  Purifier purify;
};

struct AccuracyRow {
  std::string variant;
  double clean_accuracy = 0;
  double robust_accuracy = 0;
};

struct AccuracyTable {
  double standard_accuracy = 0;  // clean inputs, no purification
  double attacked_accuracy = 0;  // attacked inputs, no purification
  std::vector<AccuracyRow> rows;

  const AccuracyRow& row(const std::string& variant) const;
};

/// Black-box evaluation: the attack sees only the classifier; each purifier
/// is applied to the clean and the attacked inputs. Accuracies are averaged
/// over `repeats` independent purification draws.
AccuracyTable evaluate(const ToyClassifier& clf, const std::vector<NamedPurifier>& purifiers,
                       const Tensord& data, const std::vector<int>& labels,
                       const AttackBudget& budget, AttackKind kind, std::uint64_t seed,
                       int repeats = 1, const ValueRange& range = {});

/// Same, with precomputed adversarial inputs.
AccuracyTable evaluate_attacked(const ToyClassifier& clf,
                                const std::vector<NamedPurifier>& purifiers,
                                const Tensord& data, const Tensord& attacked,
                                const std::vector<int>& labels, std::uint64_t seed,
                                int repeats = 1);

}  // namespace lorid

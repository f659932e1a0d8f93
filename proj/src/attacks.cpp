#include "lorid/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace lorid {

namespace {

Eigen::Map<const Matrixd> columns(const Tensord& batch) {
  const std::size_t n = batch.dim(0);
  return {batch.values().data(), static_cast<Eigen::Index>(batch.size() / n),
          static_cast<Eigen::Index>(n)};
}

Shape sample_shape(const Tensord& batch) {
  Shape s(batch.shape().begin() + 1, batch.shape().end());
  if (s.empty()) s = {1};
  return s;
}

Matrixd softmax(const Matrixd& logits) {
  Matrixd p = logits.rowwise() - logits.colwise().maxCoeff();
  p = p.array().exp();
  p.array().rowwise() /= p.colwise().sum().array();
  return p;
}

}  // namespace

ToyClassifier::ToyClassifier(Mlp net, std::size_t classes)
    : net_(std::move(net)), classes_(classes) {
  if (classes_ < 2) throw std::invalid_argument("classifier needs >= 2 classes");
  if (net_.output_size() != classes_)
    throw std::invalid_argument("classifier output size must equal class count");
}

Matrixd ToyClassifier::probabilities(const Matrixd& x) const {
  return softmax(net_.forward(x));
}

int ToyClassifier::predict(const Tensord& x) const {
  Eigen::Index best = 0;
  net_.forward(x.values()).col(0).maxCoeff(&best);
  return static_cast<int>(best);
}

std::vector<int> ToyClassifier::predict_batch(const Tensord& batch) const {
  const Matrixd logits = net_.forward(columns(batch));
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    Eigen::Index best = 0;
    logits.col(c).maxCoeff(&best);
    out[static_cast<std::size_t>(c)] = static_cast<int>(best);
  }
  return out;
}

ToyClassifier::LossGradients ToyClassifier::loss_and_gradients(
    const Matrixd& x, std::span<const int> labels) const {
  if (static_cast<std::size_t>(x.cols()) != labels.size())
    throw std::invalid_argument("one label per column required");
  Mlp::Cache cache;
  const Matrixd p = softmax(net_.forward(x, cache));
  const auto n = static_cast<double>(labels.size());
  Matrixd grad = p;
  double loss = 0;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    const int y = labels[c];
    if (y < 0 || static_cast<std::size_t>(y) >= classes_)
      throw std::invalid_argument("label out of range");
    const auto col = static_cast<Eigen::Index>(c);
    loss -= std::log(std::max(p(y, col), 1e-300));
    grad(y, col) -= 1.0;
  }
  LossGradients out;
  out.loss = loss / n;
  out.grads = net_.backward(cache, grad / n);
  return out;
}

Tensord ToyClassifier::input_gradient(const Tensord& x, int label) const {
  const int labels[] = {label};
  auto lg = loss_and_gradients(x.values(), labels);
  return Tensord(x.shape(), lg.grads.input.col(0));
}

TrainedClassifier train_classifier(const Tensord& data, const std::vector<int>& labels,
                                   const ClassifierHyperparams& params, Rng& rng) {
  if (data.order() < 2 || data.dim(0) != labels.size() || labels.empty())
    throw std::invalid_argument("classifier data must be (N, ...) with N labels");
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw std::invalid_argument("classifier needs >= 2 distinct classes");
  if (*distinct.begin() < 0) throw std::invalid_argument("labels must be >= 0");
  const auto classes = static_cast<std::size_t>(*distinct.rbegin() + 1);
  const std::size_t n = labels.size();
  const Matrixd x = columns(data);

  std::vector<std::size_t> sizes{static_cast<std::size_t>(x.rows())};
  sizes.insert(sizes.end(), params.hidden.begin(), params.hidden.end());
  sizes.push_back(classes);
  ToyClassifier clf(Mlp(sizes, params.activation, rng), classes);
  ClassifierReport report;

  {
    const std::size_t m = std::min<std::size_t>(n, 16);
    const Matrixd probe = x.leftCols(static_cast<Eigen::Index>(m));
    const std::span<const int> probe_labels(labels.data(), m);
    const auto lg = clf.loss_and_gradients(probe, probe_labels);
    const auto idx = probe_indices(clf.network(), params.gradient_check_params);
    report.gradient_check_residual = finite_difference_check(
        clf.network(), [&] { return clf.loss_and_gradients(probe, probe_labels).loss; },
        lg.grads, idx);
  }

  Optimizer opt(clf.network(), params.learning_rate);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    opt.set_learning_rate(
        cosine_learning_rate(params.learning_rate, params.lr_floor, epoch, params.epochs));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += params.batch_size) {
      const std::size_t len = std::min(params.batch_size, n - start);
      Matrixd xb(x.rows(), static_cast<Eigen::Index>(len));
      std::vector<int> yb(len);
      for (std::size_t k = 0; k < len; ++k) {
        xb.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(order[start + k]));
        yb[k] = labels[order[start + k]];
      }
      const auto lg = clf.loss_and_gradients(xb, yb);
      if (!std::isfinite(lg.loss))
        throw std::runtime_error("classifier training diverged at epoch " + std::to_string(epoch));
      opt.step(clf.network(), lg.grads);
      total += lg.loss;
      ++batches;
    }
    report.epoch_losses.push_back(total / static_cast<double>(batches));
  }
  report.train_accuracy = accuracy(clf, data, labels);
  return {std::move(clf), std::move(report)};
}

double accuracy(const ToyClassifier& clf, const Tensord& data, const std::vector<int>& labels) {
  const auto pred = clf.predict_batch(data);
  if (pred.size() != labels.size()) throw std::invalid_argument("label count mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

void AttackBudget::validate() const {
  if (!(epsilon >= 0)) throw std::invalid_argument("attack epsilon must be >= 0");
  if (steps < 1) throw std::invalid_argument("attack needs >= 1 step");
  if (step_size < 0) throw std::invalid_argument("attack step size must be >= 0");
}

namespace {

void clamp_to(Tensord& x, const ValueRange& range) {
  x.values() = x.values().cwiseMax(range.lo).cwiseMin(range.hi);
}

// Projects x_adv onto the budget ball around x, then into the value range.
void project(Tensord& x_adv, const Tensord& x, const AttackBudget& budget,
             const ValueRange& range) {
  Vectord delta = x_adv.values() - x.values();
  if (budget.norm == NormKind::linf) {
    delta = delta.cwiseMax(-budget.epsilon).cwiseMin(budget.epsilon);
  } else {
    const double norm = delta.norm();
    if (norm > budget.epsilon) delta *= budget.epsilon / norm;
  }
  x_adv.values() = x.values() + delta;
  clamp_to(x_adv, range);
}

// Ascent direction: sign of the gradient (linf) or its unit vector (l2).
Vectord ascent(const Vectord& g, NormKind norm) {
  if (norm == NormKind::linf) return g.array().sign().matrix();
  return g / g.norm();
}

}  // namespace

AttackResult fgsm(const ToyClassifier& clf, const Tensord& x, int label,
                  const AttackBudget& budget, const ValueRange& range) {
  budget.validate();
  const Tensord g = clf.input_gradient(x, label);
  if (g.values().isZero(0.0)) return {x, true};
  Tensord x_adv(x.shape(), x.values() + budget.epsilon * ascent(g.values(), budget.norm));
  clamp_to(x_adv, range);
  return {std::move(x_adv), false};
}

AttackResult pgd(const ToyClassifier& clf, const Tensord& x, int label,
                 const AttackBudget& budget, Rng& rng, const ValueRange& range) {
  budget.validate();
  Tensord x_adv = x;
  if (budget.norm == NormKind::linf) {
    std::uniform_real_distribution<double> u(-budget.epsilon, budget.epsilon);
    for (std::size_t i = 0; i < x_adv.size(); ++i) x_adv[i] += u(rng);
  } else {
    Vectord dir = standard_normal(static_cast<Eigen::Index>(x.size()), rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double radius =
        budget.epsilon * std::pow(u(rng), 1.0 / static_cast<double>(x.size()));
    x_adv.values() += radius * dir / dir.norm();
  }
  project(x_adv, x, budget, range);

  bool moved = false;
  for (int s = 0; s < budget.steps; ++s) {
    const Tensord g = clf.input_gradient(x_adv, label);
    if (g.values().isZero(0.0)) break;
    moved = true;
    x_adv.values() += budget.effective_step() * ascent(g.values(), budget.norm);
    project(x_adv, x, budget, range);
  }
  if (!moved) return {x, true};
  return {std::move(x_adv), false};
}

Tensord attack_batch(const ToyClassifier& clf, const Tensord& data,
                     const std::vector<int>& labels, const AttackBudget& budget,
                     AttackKind kind, std::uint64_t seed, const ValueRange& range) {
  const std::size_t n = data.dim(0);
  if (labels.size() != n) throw std::invalid_argument("label count mismatch");
  const std::size_t per = data.size() / n;
  const Shape shape = sample_shape(data);
  Tensord out(data.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const auto off = static_cast<Eigen::Index>(i * per);
    const Tensord x(shape, data.values().segment(off, static_cast<Eigen::Index>(per)));
    Rng rng = make_rng(seed, i);
    const AttackResult r = kind == AttackKind::fgsm ? fgsm(clf, x, labels[i], budget, range)
                                                    : pgd(clf, x, labels[i], budget, rng, range);
    out.values().segment(off, static_cast<Eigen::Index>(per)) = r.x_adv.values();
  }
  return out;
}

const AccuracyRow& AccuracyTable::row(const std::string& variant) const {
  for (const auto& r : rows)
    if (r.variant == variant) return r;
  throw std::out_of_range("no accuracy row named " + variant);
}

namespace {

double purified_accuracy(const ToyClassifier& clf, const Purifier& purify, const Tensord& data,
                         const std::vector<int>& labels, std::uint64_t seed, int repeats) {
  const std::size_t n = data.dim(0);
  const std::size_t per = data.size() / n;
  const Shape shape = sample_shape(data);
  std::size_t hits = 0;
  for (int r = 0; r < repeats; ++r)
    for (std::size_t i = 0; i < n; ++i) {
      const Tensord x(shape, data.values().segment(static_cast<Eigen::Index>(i * per),
                                                   static_cast<Eigen::Index>(per)));
      Rng rng = make_rng(seed, static_cast<std::uint64_t>(r) * n + i);
      hits += clf.predict(purify(x, rng)) == labels[i];
    }
  return static_cast<double>(hits) / static_cast<double>(n * static_cast<std::size_t>(repeats));
}

}  // namespace

AccuracyTable evaluate_attacked(const ToyClassifier& clf,
                                const std::vector<NamedPurifier>& purifiers,
                                const Tensord& data, const Tensord& attacked,
                                const std::vector<int>& labels, std::uint64_t seed,
                                int repeats) {
  data.require_same_shape(attacked);
  if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  AccuracyTable table;
  table.standard_accuracy = accuracy(clf, data, labels);
  table.attacked_accuracy = accuracy(clf, attacked, labels);
  for (std::size_t k = 0; k < purifiers.size(); ++k) {
    const auto& p = purifiers[k];
    const std::uint64_t s = mix_seed(seed, k);
    table.rows.push_back({p.name, purified_accuracy(clf, p.purify, data, labels, s, repeats),
                          purified_accuracy(clf, p.purify, attacked, labels, s, repeats)});
  }
  return table;
}

AccuracyTable evaluate(const ToyClassifier& clf, const std::vector<NamedPurifier>& purifiers,
                       const Tensord& data, const std::vector<int>& labels,
                       const AttackBudget& budget, AttackKind kind, std::uint64_t seed,
                       int repeats, const ValueRange& range) {
  const Tensord attacked = attack_batch(clf, data, labels, budget, kind, seed, range);
  return evaluate_attacked(clf, purifiers, data, attacked, labels, mix_seed(seed, 0xe7a1),
                           repeats);
}

}  // namespace lorid

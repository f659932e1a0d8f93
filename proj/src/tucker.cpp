#include "lorid/tucker.hpp"

#include "lorid/svd.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lorid {

void TensorizationLayout::validate() const {
  if (height == 0 || width == 0 || channels == 0 || patch == 0)
    throw std::invalid_argument("tensorization layout has a zero dimension");
  if (height % patch != 0 || width % patch != 0)
    throw std::invalid_argument("patch " + std::to_string(patch) +
                                " does not divide image " +
                                std::to_string(height) + "x" +
                                std::to_string(width));
}

namespace {

std::size_t batch_count(const Shape& shape, std::size_t single_order) {
  if (shape.size() == single_order) return 0;
  if (shape.size() == single_order + 1) return shape[0];
  throw std::invalid_argument("expected order " + std::to_string(single_order) +
                              " or " + std::to_string(single_order + 1) +
                              ", got shape " + shape_string(shape));
}

// Single-image index maps between pixel layout and tensor layout.
template <typename Fn>
void for_each_pixel(const TensorizationLayout& l, Fn&& fn) {
  const std::size_t p = l.patch;
  const std::size_t bw = l.width / p;
  for (std::size_t i = 0; i < l.height; ++i)
    for (std::size_t j = 0; j < l.width; ++j)
      for (std::size_t c = 0; c < l.channels; ++c) {
        const std::size_t pixel = (i * l.width + j) * l.channels + c;
        const std::size_t bi = i / p, di = i % p, bj = j / p, dj = j % p;
        const std::size_t cell =
            ((bi * bw + bj) * (p * p) + di * p + dj) * l.channels + c;
        fn(pixel, cell);
      }
}

}  // namespace

Tensord tensorize(const Tensord& image, const TensorizationLayout& layout) {
  layout.validate();
  const std::size_t n = batch_count(image.shape(), 3);
  const Shape expected = layout.image_shape();
  Shape single(image.shape().end() - 3, image.shape().end());
  if (single != expected)
    throw std::invalid_argument("image shape " + shape_string(image.shape()) +
                                " does not match layout " +
                                shape_string(expected));
  Shape out_shape = layout.tensor_shape();
  if (n) out_shape.insert(out_shape.begin(), n);
  Tensord out(out_shape);
  const std::size_t per = layout.pixels();
  for (std::size_t b = 0; b < std::max<std::size_t>(n, 1); ++b)
    for_each_pixel(layout, [&](std::size_t pixel, std::size_t cell) {
      out[b * per + cell] = image[b * per + pixel];
    });
  return out;
}

Tensord detensorize(const Tensord& tensor, const TensorizationLayout& layout) {
  layout.validate();
  const std::size_t n = batch_count(tensor.shape(), 4);
  Shape single(tensor.shape().end() - 4, tensor.shape().end());
  if (single != layout.tensor_shape())
    throw std::invalid_argument("tensor shape " + shape_string(tensor.shape()) +
                                " does not match layout " +
                                shape_string(layout.tensor_shape()));
  Shape out_shape = layout.image_shape();
  if (n) out_shape.insert(out_shape.begin(), n);
  Tensord out(out_shape);
  const std::size_t per = layout.pixels();
  for (std::size_t b = 0; b < std::max<std::size_t>(n, 1); ++b)
    for_each_pixel(layout, [&](std::size_t pixel, std::size_t cell) {
      out[b * per + pixel] = tensor[b * per + cell];
    });
  return out;
}

double Hosvd::discarded_total() const {
  return std::accumulate(discarded_energy.begin(), discarded_energy.end(), 0.0);
}

namespace {

std::size_t select_rank(const Vectord& sigma, std::size_t dim,
                        const RankPolicy& policy, std::size_t policy_index) {
  if (const auto* explicit_ranks = std::get_if<ExplicitRanks>(&policy)) {
    if (policy_index >= explicit_ranks->ranks.size())
      throw std::invalid_argument("explicit rank list is shorter than the mode list");
    const std::size_t r = explicit_ranks->ranks[policy_index];
    if (r == 0 || r > dim)
      throw std::invalid_argument("rank " + std::to_string(r) +
                                  " outside [1, " + std::to_string(dim) + "]");
    return r;
  }
  const double eta = std::get<EnergyFraction>(policy).eta;
  if (!(eta > 0.0 && eta <= 1.0))
    throw std::invalid_argument("energy fraction must lie in (0, 1]");
  if (eta >= 1.0) return dim;
  const double total = sigma.squaredNorm();
  double kept = 0;
  for (Eigen::Index r = 0; r < sigma.size(); ++r) {
    kept += sigma[r] * sigma[r];
    if (kept >= eta * total) return static_cast<std::size_t>(r + 1);
  }
  return static_cast<std::size_t>(sigma.size());
}

}  // namespace

Hosvd truncated_hosvd(const Tensord& x, const std::vector<std::size_t>& modes,
                      const RankPolicy& policy) {
  Hosvd out;
  out.modes = modes;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const std::size_t mode = modes[k];
    const Matrixd m = unfold(x, mode);
    auto dec = svd(m);
    const std::size_t dim = x.dim(mode);
    const std::size_t rank = select_rank(dec.s, dim, policy, k);

    // A narrow unfolding (cols < dim) yields fewer than dim left vectors; the
    // remaining directions carry zero energy and are completed arbitrarily.
    const auto r = static_cast<Eigen::Index>(rank);
    Matrixd factor(static_cast<Eigen::Index>(dim), r);
    const Eigen::Index have = std::min(r, dec.u.cols());
    factor.leftCols(have) = dec.u.leftCols(have);
    if (have < r) {
      factor.rightCols(r - have).setZero();
      std::vector<bool> missing(rank, false);
      for (Eigen::Index j = have; j < r; ++j) missing[static_cast<std::size_t>(j)] = true;
      detail::complete_orthonormal(factor, missing);
    }
    out.factors.push_back(std::move(factor));
    out.ranks.push_back(rank);
    double discarded = 0;
    for (Eigen::Index i = static_cast<Eigen::Index>(rank); i < dec.s.size(); ++i)
      discarded += dec.s[i] * dec.s[i];
    out.discarded_energy.push_back(discarded);
    out.singular_values.push_back(std::move(dec.s));
  }
  return out;
}

Tensord tucker_core(const Tensord& x, const std::vector<std::size_t>& modes,
                    const std::vector<Matrixd>& factors) {
  Tensord g = x;
  for (std::size_t k = 0; k < modes.size(); ++k)
    g = mode_product(g, factors[k].transpose(), modes[k]);
  return g;
}

Tensord tucker_reconstruct(const Tensord& core,
                           const std::vector<std::size_t>& modes,
                           const std::vector<Matrixd>& factors) {
  Tensord x = core;
  for (std::size_t k = 0; k < modes.size(); ++k)
    x = mode_product(x, factors[k], modes[k]);
  return x;
}

Tensord tucker_project(const Tensord& x, const std::vector<std::size_t>& modes,
                       const std::vector<Matrixd>& factors) {
  return tucker_reconstruct(tucker_core(x, modes, factors), modes, factors);
}

double TuckerBasis::discarded_total() const {
  return std::accumulate(discarded_energy.begin(), discarded_energy.end(), 0.0);
}

void TuckerBasis::validate() const {
  layout.validate();
  const Shape dims = layout.tensor_shape();
  if (factors.size() != dims.size() || ranks.size() != dims.size())
    throw std::invalid_argument("basis needs one factor per tensor mode");
  for (std::size_t n = 0; n < dims.size(); ++n) {
    if (static_cast<std::size_t>(factors[n].rows()) != dims[n] ||
        static_cast<std::size_t>(factors[n].cols()) != ranks[n] ||
        ranks[n] == 0 || ranks[n] > dims[n])
      throw std::invalid_argument("basis factor " + std::to_string(n) +
                                  " inconsistent with layout");
  }
}

TuckerBasis fit_basis(const Tensord& dataset, const TensorizationLayout& layout,
                      const RankPolicy& policy) {
  if (dataset.order() != 4)
    throw std::invalid_argument("fit_basis expects an (N, H, W, C) dataset");
  const Tensord t = tensorize(dataset, layout);
  const Hosvd h = truncated_hosvd(t, {1, 2, 3, 4}, policy);
  TuckerBasis basis;
  basis.layout = layout;
  basis.factors = h.factors;
  basis.ranks = h.ranks;
  basis.discarded_energy = h.discarded_energy;
  return basis;
}

Tensord tf_apply(const Tensord& x, const TuckerBasis& basis) {
  const Tensord t = tensorize(x, basis.layout);
  const std::vector<std::size_t> modes =
      t.order() == 5 ? std::vector<std::size_t>{1, 2, 3, 4}
                     : std::vector<std::size_t>{0, 1, 2, 3};
  return detensorize(tucker_project(t, modes, basis.factors), basis.layout)
      .reshaped(x.shape());
}

Tensord tf_residual(const Tensord& x, const TuckerBasis& basis) {
  return x - tf_apply(x, basis);
}

TuckerErrorTerms tucker_error_terms(const Tensord& x_clean, const Tensord& eps,
                                    const TuckerBasis& basis) {
  x_clean.require_same_shape(eps);
  return {frobenius_norm(tf_residual(x_clean, basis)),
          frobenius_norm(tf_apply(eps, basis))};
}

}  // namespace lorid

#pragma once

#include "lorid/tensor.hpp"

#include <cstddef>
#include <variant>
#include <vector>

namespace lorid {

/// Patch-based reshuffle of an (H, W, C) image into an order-4 tensor
/// (H/p, W/p, p*p, C). Entry (bi, bj, di*p + dj, c) holds pixel
/// (bi*p + di, bj*p + dj, c).
struct TensorizationLayout {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::size_t patch = 4;

  void validate() const;
  Shape image_shape() const { return {height, width, channels}; }
  Shape tensor_shape() const {
    return {height / patch, width / patch, patch * patch, channels};
  }
  std::size_t pixels() const { return height * width * channels; }
  bool operator==(const TensorizationLayout&) const = default;
};

/// Accepts a single image (H, W, C) or a batch (N, H, W, C); the batch mode
/// is carried through untouched.
Tensord tensorize(const Tensord& image, const TensorizationLayout& layout);
Tensord detensorize(const Tensord& tensor, const TensorizationLayout& layout);

/// Keep the smallest rank whose retained squared singular values reach
/// `eta` of the total.
struct EnergyFraction {
  double eta = 0.95;
};
struct ExplicitRanks {
  std::vector<std::size_t> ranks;
};
using RankPolicy = std::variant<EnergyFraction, ExplicitRanks>;

/// Truncated HOSVD over a subset of modes of an arbitrary tensor.
struct Hosvd {
  std::vector<std::size_t> modes;
  std::vector<Matrixd> factors;          // I_n x r_n, orthonormal columns
  std::vector<std::size_t> ranks;
  std::vector<double> discarded_energy;  // sum of sigma_i^2 for i > r_n
  std::vector<Vectord> singular_values;

  double discarded_total() const;
};

Hosvd truncated_hosvd(const Tensord& x, const std::vector<std::size_t>& modes,
                      const RankPolicy& policy);

/// x ×_n U_n^T over the given modes.
Tensord tucker_core(const Tensord& x, const std::vector<std::size_t>& modes,
                    const std::vector<Matrixd>& factors);
/// core ×_n U_n over the given modes.
Tensord tucker_reconstruct(const Tensord& core,
                           const std::vector<std::size_t>& modes,
                           const std::vector<Matrixd>& factors);
/// Orthogonal projection x ×_n (U_n U_n^T).
Tensord tucker_project(const Tensord& x, const std::vector<std::size_t>& modes,
                       const std::vector<Matrixd>& factors);

/// Factors fitted once on clean data and then frozen. One factor per mode of
/// the tensorized image (H/p, W/p, p*p, C).
struct TuckerBasis {
  std::vector<Matrixd> factors;
  std::vector<std::size_t> ranks;
  TensorizationLayout layout;
  std::vector<double> discarded_energy;

  double discarded_total() const;
  void validate() const;
};

/// `dataset` is (N, H, W, C). The batch mode is never decomposed.
TuckerBasis fit_basis(const Tensord& dataset, const TensorizationLayout& layout,
                      const RankPolicy& policy);

/// TF = T^-1 ∘ project ∘ T. Accepts a single image or a batch.
Tensord tf_apply(const Tensord& x, const TuckerBasis& basis);

/// The part of x that TF removes: x - TF(x).
Tensord tf_residual(const Tensord& x, const TuckerBasis& basis);

struct TuckerErrorTerms {
  double e_tucker = 0;        // ||x - TF(x)||
  double residual_noise = 0;  // ||TF(eps)||
};

TuckerErrorTerms tucker_error_terms(const Tensord& x_clean, const Tensord& eps,
                                    const TuckerBasis& basis);

}  // namespace lorid

#pragma once

#include "lorid/attacks.hpp"
#include "lorid/denoiser.hpp"
#include "lorid/mlp.hpp"
#include "lorid/purify.hpp"
#include "lorid/tensor.hpp"
#include "lorid/tucker.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lorid {

/// Malformed or unreadable file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// TensorFile layout (little-endian): "LTEN", u16 version, u16 ndim,
// ndim x u64 dims, then product(dims) IEEE-754 doubles in row-major order.
inline constexpr char kTensorMagic[4] = {'L', 'T', 'E', 'N'};
inline constexpr std::uint16_t kTensorVersion = 1;

void write_tensor(std::ostream& out, const Tensord& x);
Tensord read_tensor(std::istream& in);
void write_tensor(const std::filesystem::path& path, const Tensord& x);
Tensord read_tensor(const std::filesystem::path& path);

/// Several records back to back; reading stops at a clean end of file.
void write_tensors(const std::filesystem::path& path, const std::vector<Tensord>& xs);
std::vector<Tensord> read_tensors(const std::filesystem::path& path);

/// Row-major (rows, cols) tensor <-> matrix.
Tensord matrix_to_tensor(const Matrixd& m);
Matrixd tensor_to_matrix(const Tensord& t);

// Model bundles: a header tensor whose first entry is a kind tag, followed by
// the payload tensors.
void save_basis(const std::filesystem::path& path, const TuckerBasis& basis);
TuckerBasis load_basis(const std::filesystem::path& path);

void save_mlp_denoiser(const std::filesystem::path& path, const MlpDenoiser& den);
MlpDenoiser load_mlp_denoiser(const std::filesystem::path& path);

void save_classifier(const std::filesystem::path& path, const ToyClassifier& clf);
ToyClassifier load_classifier(const std::filesystem::path& path);

void save_prior(const std::filesystem::path& path, const GaussianPrior& prior);
GaussianPrior load_prior(const std::filesystem::path& path);

/// Loads either an MLP denoiser bundle or a Gaussian prior bundle (wrapped in
/// the posterior-mean oracle for `schedule`).
std::unique_ptr<Denoiser> load_denoiser(const std::filesystem::path& path,
                                        const Schedule& schedule);

/// Labels travel as a 1-D tensor of small integers.
Tensord labels_to_tensor(const std::vector<int>& labels);
std::vector<int> tensor_to_labels(const Tensord& t);

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
};

/// Shortest round-trip decimal form of a double.
std::string format_number(double v);

void write_csv(std::ostream& out, const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
/// Column-aligned plain text rendering.
std::string format_aligned(const CsvTable& table);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// key=value run configuration. Lines starting with '#' and blank lines are
/// ignored. T, beta_start, beta_end and seed are required.
struct RunConfig {
  int steps = 1000;  // key T
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::uint64_t seed = 0;

  int t = 100;
  int loops = 1;  // key L
  bool use_tucker = false;
  Sampler sampler = Sampler::ancestral;
  int skip_k = 1;
  LoopOrder order = LoopOrder::diffuse_then_denoise;

  std::size_t patch = 4;
  double eta = 0.95;
  std::vector<std::size_t> ranks;  // overrides eta when non-empty
  std::optional<std::pair<double, double>> clamp;  // key clamp = lo,hi

  // Analysis settings.
  int dim = 8;
  std::size_t trials = 10000;
  std::vector<double> eps_norms = {0.1, 0.5};
  std::vector<int> t_list = {50, 200, 500, 800};
  std::vector<int> effective_t = {200, 400, 600, 900};
  int loops_max = 10;  // key L_max
  std::vector<double> snr_grid = {0, 0.5, 1, 2};

  LoridConfig lorid_config() const;
  RankPolicy rank_policy() const;
};

RunConfig parse_config(std::istream& in);
RunConfig parse_config(const std::filesystem::path& path);
/// Applies one key=value entry; throws ConfigError for unknown keys or bad values.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

std::vector<double> parse_double_list(const std::string& text);
std::vector<int> parse_int_list(const std::string& text);

/// (n, d) standard-normal samples.
Tensord gen_gaussian_dataset(std::size_t d, std::size_t n, std::uint64_t seed);

/// (n, 1) samples uniform on {-1, +1}.
Tensord gen_two_point_dataset(std::size_t n, std::uint64_t seed);

struct LabeledData {
  Tensord data;  // (N, ...)
  std::vector<int> labels;
};

/// Two isotropic 2-D Gaussians at (-separation/2, 0) and (+separation/2, 0).
LabeledData gen_two_gaussians(std::size_t n, std::uint64_t seed, double separation = 6.0);

struct StripeParams {
  std::size_t size = 16;
  double amplitude_lo = 0.15;
  double amplitude_hi = 0.3;
  double noise = 0.01;
};

/// (n, 16, 16, 1) images in [0, 1]: class 0 has horizontal stripes, class 1
/// vertical ones, with period 4 aligned to the 4x4 patch grid. Classes
/// alternate so every prefix is balanced.
LabeledData gen_striped_images(std::size_t n, std::uint64_t seed, const StripeParams& params = {});

}  // namespace lorid

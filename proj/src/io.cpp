#include "lorid/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace lorid {

namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes;
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw FormatError(std::string("truncated tensor file while reading ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

std::uint64_t double_bits(double v) {
  std::uint64_t b;
  std::memcpy(&b, &v, sizeof b);
  return b;
}

double bits_double(std::uint64_t b) {
  double v;
  std::memcpy(&v, &b, sizeof v);
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensord& x) {
  if (x.order() > std::numeric_limits<std::uint16_t>::max())
    throw std::invalid_argument("tensor order too large for the file format");
  out.write(kTensorMagic, 4);
  put_le<std::uint16_t>(out, kTensorVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(x.order()));
  for (std::size_t d : x.shape()) put_le<std::uint64_t>(out, d);
  for (std::size_t i = 0; i < x.size(); ++i) put_le<std::uint64_t>(out, double_bits(x[i]));
  if (!out) throw std::runtime_error("tensor write failed");
}

Tensord read_tensor(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4) throw FormatError("truncated tensor file while reading magic");
  if (std::memcmp(magic, kTensorMagic, 4) != 0) throw FormatError("bad tensor magic");
  const auto version = get_le<std::uint16_t>(in, "version");
  if (version == 0 || version > kTensorVersion)
    throw FormatError("unsupported tensor format version " + std::to_string(version));
  const auto ndim = get_le<std::uint16_t>(in, "ndim");
  if (ndim == 0) throw FormatError("tensor file declares zero dimensions");
  Shape shape(ndim);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    const auto v = get_le<std::uint64_t>(in, "dims");
    if (v == 0) throw FormatError("tensor file declares an empty dimension");
    if (count > std::numeric_limits<std::uint64_t>::max() / 8 / v)
      throw FormatError("tensor dimensions overflow");
    count *= v;
    d = static_cast<std::size_t>(v);
  }
  if (count > static_cast<std::uint64_t>(std::numeric_limits<Eigen::Index>::max()))
    throw FormatError("tensor dimensions overflow");
  // Reject truncated payloads before allocating for them.
  const auto here = in.tellg();
  if (here != std::streampos(-1)) {
    in.seekg(0, std::ios::end);
    const auto end = in.tellg();
    in.seekg(here);
    if (end - here < static_cast<std::streamoff>(count * 8))
      throw FormatError("truncated tensor payload");
  }
  Vectord values(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < values.size(); ++i)
    values[i] = bits_double(get_le<std::uint64_t>(in, "payload"));
  return Tensord(std::move(shape), std::move(values));
}

void write_tensor(const std::filesystem::path& path, const Tensord& x) {
  auto out = open_out(path);
  write_tensor(out, x);
}

Tensord read_tensor(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_tensor(in);
}

void write_tensors(const std::filesystem::path& path, const std::vector<Tensord>& xs) {
  auto out = open_out(path);
  for (const auto& x : xs) write_tensor(out, x);
}

std::vector<Tensord> read_tensors(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<Tensord> out;
  while (in.peek() != std::char_traits<char>::eof()) out.push_back(read_tensor(in));
  return out;
}

Tensord matrix_to_tensor(const Matrixd& m) {
  const Matrixd mt = m.transpose();
  return Tensord({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                 Eigen::Map<const Vectord>(mt.data(), mt.size()));
}

Matrixd tensor_to_matrix(const Tensord& t) {
  if (t.order() != 2) throw FormatError("expected a 2-D tensor, got " + shape_string(t.shape()));
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      t.values().data(), static_cast<Eigen::Index>(t.dim(0)),
      static_cast<Eigen::Index>(t.dim(1)));
}

namespace {

enum class BundleKind { basis = 1, mlp_denoiser = 2, classifier = 3, prior = 4 };

Tensord header(BundleKind kind, const std::vector<double>& fields) {
  Vectord v(static_cast<Eigen::Index>(fields.size() + 1));
  v[0] = static_cast<double>(kind);
  for (std::size_t i = 0; i < fields.size(); ++i) v[static_cast<Eigen::Index>(i + 1)] = fields[i];
  return Tensord({fields.size() + 1}, v);
}

std::size_t as_count(double v, const char* what) {
  if (!(v >= 0) || v != std::floor(v) || v > 1e15)
    throw FormatError(std::string("invalid ") + what + " in bundle header");
  return static_cast<std::size_t>(v);
}

std::vector<Tensord> read_bundle(const std::filesystem::path& path, BundleKind kind,
                                 std::size_t min_header) {
  auto ts = read_tensors(path);
  if (ts.empty() || ts[0].order() != 1 || ts[0].size() < min_header + 1)
    throw FormatError(path.string() + ": missing bundle header");
  if (ts[0][0] != static_cast<double>(kind))
    throw FormatError(path.string() + ": bundle holds a different kind of object");
  return ts;
}

void append_mlp(std::vector<Tensord>& out, const Mlp& net) {
  for (const auto& layer : net.layers()) {
    out.push_back(matrix_to_tensor(layer.weight));
    out.push_back(Tensord({static_cast<std::size_t>(layer.bias.size())}, layer.bias));
  }
}

Mlp read_mlp(const std::vector<Tensord>& ts, std::size_t first, std::size_t layers,
             double activation) {
  if (ts.size() != first + 2 * layers) throw FormatError("network bundle has wrong record count");
  const auto act = as_count(activation, "activation");
  if (act > 1) throw FormatError("unknown activation in network bundle");
  std::vector<Mlp::Layer> ls;
  for (std::size_t l = 0; l < layers; ++l) {
    Mlp::Layer layer{tensor_to_matrix(ts[first + 2 * l]), ts[first + 2 * l + 1].values()};
    if (layer.bias.size() != layer.weight.rows())
      throw FormatError("network bundle bias does not match weight rows");
    if (l > 0 && layer.weight.cols() != ls.back().weight.rows())
      throw FormatError("network bundle layer sizes do not chain");
    ls.push_back(std::move(layer));
  }
  return Mlp(std::move(ls), act == 0 ? Activation::tanh : Activation::relu);
}

double activation_code(Activation a) { return a == Activation::tanh ? 0.0 : 1.0; }

}  // namespace

void save_basis(const std::filesystem::path& path, const TuckerBasis& basis) {
  basis.validate();
  const auto& lay = basis.layout;
  std::vector<double> fields = {double(lay.height), double(lay.width), double(lay.channels),
                                double(lay.patch), double(basis.factors.size())};
  for (std::size_t r : basis.ranks) fields.push_back(double(r));
  std::vector<Tensord> ts{header(BundleKind::basis, fields)};
  for (const auto& f : basis.factors) ts.push_back(matrix_to_tensor(f));
  if (!basis.discarded_energy.empty()) {
    Vectord e = Eigen::Map<const Vectord>(basis.discarded_energy.data(),
                                          static_cast<Eigen::Index>(basis.discarded_energy.size()));
    ts.push_back(Tensord({basis.discarded_energy.size()}, e));
  }
  write_tensors(path, ts);
}

TuckerBasis load_basis(const std::filesystem::path& path) {
  const auto ts = read_bundle(path, BundleKind::basis, 5);
  const Tensord& h = ts[0];
  TuckerBasis b;
  b.layout = {as_count(h[1], "height"), as_count(h[2], "width"), as_count(h[3], "channels"),
              as_count(h[4], "patch")};
  const std::size_t n = as_count(h[5], "factor count");
  if (h.size() != 6 + n || ts.size() < 1 + n) throw FormatError("basis bundle is inconsistent");
  for (std::size_t i = 0; i < n; ++i) {
    b.ranks.push_back(as_count(h[6 + i], "rank"));
    b.factors.push_back(tensor_to_matrix(ts[1 + i]));
  }
  if (ts.size() == 2 + n) {
    const Vectord& e = ts[1 + n].values();
    b.discarded_energy.assign(e.data(), e.data() + e.size());
  } else if (ts.size() != 1 + n) {
    throw FormatError("basis bundle has trailing records");
  }
  try {
    b.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid basis bundle: ") + e.what());
  }
  return b;
}

void save_mlp_denoiser(const std::filesystem::path& path, const MlpDenoiser& den) {
  const Mlp& net = den.network();
  std::vector<Tensord> ts{header(BundleKind::mlp_denoiser,
                                 {double(den.steps()), activation_code(net.activation()),
                                  double(net.layers().size())})};
  append_mlp(ts, net);
  write_tensors(path, ts);
}

MlpDenoiser load_mlp_denoiser(const std::filesystem::path& path) {
  const auto ts = read_bundle(path, BundleKind::mlp_denoiser, 3);
  const Tensord& h = ts[0];
  return MlpDenoiser(read_mlp(ts, 1, as_count(h[3], "layer count"), h[2]),
                     static_cast<int>(as_count(h[1], "steps")));
}

void save_classifier(const std::filesystem::path& path, const ToyClassifier& clf) {
  const Mlp& net = clf.network();
  std::vector<Tensord> ts{header(BundleKind::classifier,
                                 {double(clf.classes()), activation_code(net.activation()),
                                  double(net.layers().size())})};
  append_mlp(ts, net);
  write_tensors(path, ts);
}

ToyClassifier load_classifier(const std::filesystem::path& path) {
  const auto ts = read_bundle(path, BundleKind::classifier, 3);
  const Tensord& h = ts[0];
  return ToyClassifier(read_mlp(ts, 1, as_count(h[3], "layer count"), h[2]),
                       as_count(h[1], "class count"));
}

void save_prior(const std::filesystem::path& path, const GaussianPrior& prior) {
  write_tensors(path, {header(BundleKind::prior, {}),
                       Tensord({static_cast<std::size_t>(prior.dim())}, prior.mean()),
                       matrix_to_tensor(prior.covariance())});
}

GaussianPrior load_prior(const std::filesystem::path& path) {
  const auto ts = read_bundle(path, BundleKind::prior, 0);
  if (ts.size() != 3) throw FormatError("prior bundle has wrong record count");
  return GaussianPrior(ts[1].values(), tensor_to_matrix(ts[2]));
}

std::unique_ptr<Denoiser> load_denoiser(const std::filesystem::path& path,
                                        const Schedule& schedule) {
  Tensord head;
  {
    auto in = open_in(path);
    head = read_tensor(in);
  }
  if (head.order() != 1) throw FormatError(path.string() + ": missing bundle header");
  if (head[0] == static_cast<double>(BundleKind::prior))
    return std::make_unique<GaussianOracleDenoiser>(load_prior(path), schedule);
  if (head[0] != static_cast<double>(BundleKind::mlp_denoiser))
    throw FormatError(path.string() + " does not hold a denoiser");
  auto den = std::make_unique<MlpDenoiser>(load_mlp_denoiser(path));
  if (den->steps() != schedule.steps())
    throw FormatError("denoiser was trained for T = " + std::to_string(den->steps()) +
                      ", config has T = " + std::to_string(schedule.steps()));
  return den;
}

Tensord labels_to_tensor(const std::vector<int>& labels) {
  Vectord v(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) v[static_cast<Eigen::Index>(i)] = labels[i];
  return Tensord({labels.size()}, v);
}

std::vector<int> tensor_to_labels(const Tensord& t) {
  std::vector<int> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != std::floor(t[i]) || t[i] < 0 || t[i] > 1e6)
      throw FormatError("label tensor holds a non-label value");
    out[i] = static_cast<int>(t[i]);
  }
  return out;
}

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != columns.size())
    throw std::invalid_argument("csv row has " + std::to_string(row.size()) + " fields, expected " +
                                std::to_string(columns.size()));
  rows.push_back(std::move(row));
}

std::string format_number(double v) {
  std::array<char, 64> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_line(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << csv_escape(fields[i]);
  out << '\n';
}

}  // namespace

void write_csv(std::ostream& out, const CsvTable& table) {
  write_line(out, table.columns);
  for (const auto& r : table.rows) write_line(out, r);
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_csv(out, table);
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

std::string format_aligned(const CsvTable& table) {
  std::vector<std::size_t> width(table.columns.size());
  for (std::size_t c = 0; c < width.size(); ++c) {
    width[c] = table.columns[c].size();
    for (const auto& r : table.rows) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t c = 0; c < fields.size(); ++c) {
      out << fields[c];
      if (c + 1 < fields.size()) out << std::string(width[c] - fields[c].size() + 2, ' ');
    }
    out << '\n';
  };
  line(table.columns);
  for (const auto& r : table.rows) line(r);
  return out.str();
}

LoridConfig RunConfig::lorid_config() const {
  LoridConfig c;
  c.t = t;
  c.loops = loops;
  c.use_tucker = use_tucker;
  c.sampler = sampler;
  c.skip_k = skip_k;
  c.order = order;
  c.clamp = clamp;
  c.seed = seed;
  return c;
}

RankPolicy RunConfig::rank_policy() const {
  if (!ranks.empty()) return ExplicitRanks{ranks};
  return EnergyFraction{eta};
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw ConfigError("invalid value '" + text + "' for key " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean '" + text + "' for key " + key);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty entry in list '" + text + "'");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& s : split_list(text)) out.push_back(parse_number<double>("list", s));
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& s : split_list(text)) out.push_back(parse_number<int>("list", s));
  return out;
}

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "T") {
    cfg.steps = parse_number<int>(key, value);
  } else if (key == "beta_start") {
    cfg.beta_start = parse_number<double>(key, value);
  } else if (key == "beta_end") {
    cfg.beta_end = parse_number<double>(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "t") {
    cfg.t = parse_number<int>(key, value);
  } else if (key == "L") {
    cfg.loops = parse_number<int>(key, value);
  } else if (key == "use_tucker") {
    cfg.use_tucker = parse_bool(key, value);
  } else if (key == "sampler") {
    if (value == "ancestral") cfg.sampler = Sampler::ancestral;
    else if (value == "skip") cfg.sampler = Sampler::skip;
    else throw ConfigError("sampler must be ancestral or skip, got '" + value + "'");
  } else if (key == "skip_k") {
    cfg.skip_k = parse_number<int>(key, value);
  } else if (key == "order") {
    if (value == "diffuse_then_denoise") cfg.order = LoopOrder::diffuse_then_denoise;
    else if (value == "denoise_then_diffuse") cfg.order = LoopOrder::denoise_then_diffuse;
    else throw ConfigError("unknown loop order '" + value + "'");
  } else if (key == "patch") {
    cfg.patch = parse_number<std::size_t>(key, value);
  } else if (key == "eta") {
    cfg.eta = parse_number<double>(key, value);
  } else if (key == "ranks") {
    cfg.ranks.clear();
    for (int r : parse_int_list(value)) {
      if (r < 1) throw ConfigError("ranks must be positive");
      cfg.ranks.push_back(static_cast<std::size_t>(r));
    }
  } else if (key == "clamp") {
    const auto v = parse_double_list(value);
    if (v.size() != 2 || !(v[0] < v[1])) throw ConfigError("clamp needs lo,hi with lo < hi");
    cfg.clamp = std::make_pair(v[0], v[1]);
  } else if (key == "dim") {
    cfg.dim = parse_number<int>(key, value);
  } else if (key == "trials") {
    cfg.trials = parse_number<std::size_t>(key, value);
  } else if (key == "eps_norms") {
    cfg.eps_norms = parse_double_list(value);
  } else if (key == "t_list") {
    cfg.t_list = parse_int_list(value);
  } else if (key == "effective_t") {
    cfg.effective_t = parse_int_list(value);
  } else if (key == "L_max") {
    cfg.loops_max = parse_number<int>(key, value);
  } else if (key == "snr_grid") {
    cfg.snr_grid = parse_double_list(value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::map<std::string, int> seen;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(number) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (seen.count(key))
      throw ConfigError("line " + std::to_string(number) + ": duplicate key " + key);
    seen[key] = number;
    try {
      apply_config_entry(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  for (const char* required : {"T", "beta_start", "beta_end", "seed"})
    if (!seen.count(required))
      throw ConfigError(std::string("missing required key ") + required);
  if (cfg.steps < 1) throw ConfigError("T must be >= 1");
  if (!(cfg.beta_start > 0 && cfg.beta_end < 1 && cfg.beta_start <= cfg.beta_end))
    throw ConfigError("need 0 < beta_start <= beta_end < 1");
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in);
}

Tensord gen_gaussian_dataset(std::size_t d, std::size_t n, std::uint64_t seed) {
  if (d == 0 || n == 0) throw std::invalid_argument("dataset dimensions must be positive");
  Rng rng = make_rng(seed, 0);
  return standard_normal(Shape{n, d}, rng);
}

Tensord gen_two_point_dataset(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("dataset size must be positive");
  Rng rng = make_rng(seed, 0);
  std::bernoulli_distribution coin(0.5);
  Tensord out({n, 1});
  for (std::size_t i = 0; i < n; ++i) out[i] = coin(rng) ? 1.0 : -1.0;
  return out;
}

LabeledData gen_two_gaussians(std::size_t n, std::uint64_t seed, double separation) {
  if (n == 0) throw std::invalid_argument("dataset size must be positive");
  Rng rng = make_rng(seed, 0);
  LabeledData out{standard_normal(Shape{n, 2}, rng), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.labels[i] = static_cast<int>(i % 2);
    out.data[2 * i] += (out.labels[i] ? 0.5 : -0.5) * separation;
  }
  return out;
}

LabeledData gen_striped_images(std::size_t n, std::uint64_t seed, const StripeParams& params) {
  if (n == 0) throw std::invalid_argument("dataset size must be positive");
  if (params.size % 4 != 0) throw std::invalid_argument("stripe image size must be a multiple of 4");
  if (!(0 <= params.amplitude_lo && params.amplitude_lo <= params.amplitude_hi &&
        params.amplitude_hi + 3 * params.noise < 0.5))
    throw std::invalid_argument("stripe amplitudes must keep pixels inside [0, 1]");
  static constexpr double profile[4] = {1, 1, -1, -1};
  const std::size_t s = params.size;
  Rng rng = make_rng(seed, 0);
  std::uniform_real_distribution<double> amp(params.amplitude_lo, params.amplitude_hi);
  std::normal_distribution<double> noise(0.0, params.noise);
  LabeledData out{Tensord({n, s, s, 1}), std::vector<int>(n)};
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    out.labels[i] = label;
    const double a = amp(rng);
    for (std::size_t r = 0; r < s; ++r)
      for (std::size_t c = 0; c < s; ++c, ++k) {
        const double stripe = profile[(label == 0 ? r : c) % 4];
        out.data[k] = std::clamp(0.5 + a * stripe + noise(rng), 0.0, 1.0);
      }
  }
  return out;
}

}  // namespace lorid

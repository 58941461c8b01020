#include "idml/data.hpp"

#include "idml/detail/binary_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace idml {

void SynthConfig::validate() const {
  if (n_classes < 4) throw ParameterError("n_classes must be at least 4");
  if (per_class < 1) throw ParameterError("per_class must be positive");
  if (input_dim < 1) throw ParameterError("input_dim must be positive");
  if (signal_dim < 1 || signal_dim > input_dim) throw ParameterError("signal_dim must lie in [1, input_dim]");
  if (!(class_sep > 0.0)) throw ParameterError("class_sep must be positive");
  if (!(within_sigma > 0.0)) throw ParameterError("within_sigma must be positive");
  if (!(nuisance_sigma >= 0.0)) throw ParameterError("nuisance_sigma must be nonnegative");
  if (!(ambiguous_frac >= 0.0 && ambiguous_frac <= 1.0)) throw ParameterError("ambiguous_frac must lie in [0, 1]");
  if (!(mislabel_frac >= 0.0 && mislabel_frac <= 1.0)) throw ParameterError("mislabel_frac must lie in [0, 1]");
}

void Dataset::validate() const {
  if (features.rows() == 0 || features.cols() == 0) throw ShapeError("dataset is empty");
  if (static_cast<Index>(ids.size()) != size() || static_cast<Index>(labels.size()) != size()) {
    throw ShapeError("dataset columns have different lengths");
  }
  if (!ambiguous.empty() && static_cast<Index>(ambiguous.size()) != size()) {
    throw ShapeError("dataset ambiguity flags have the wrong length");
  }
  require_finite(features, "dataset features");
}

std::vector<int> Dataset::classes() const {
  std::set<int> all;
  for (const auto& l : labels) all.insert(l.ids().begin(), l.ids().end());
  return {all.begin(), all.end()};
}

Split Dataset::split() const {
  const std::vector<int> cls = classes();
  if (cls.size() < 2) throw ParameterError("split needs at least two classes");
  Split s;
  const std::size_t half = cls.size() / 2;
  s.train_classes.assign(cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(half));
  s.test_classes.assign(cls.begin() + static_cast<std::ptrdiff_t>(half), cls.end());
  const int boundary = s.test_classes.front();
  for (Index i = 0; i < size(); ++i) {
    const auto& ids_i = labels[static_cast<std::size_t>(i)].ids();
    if (*ids_i.rbegin() < boundary) {
      s.train.push_back(i);
    } else if (*ids_i.begin() >= boundary) {
      s.test.push_back(i);
    }
  }
  return s;
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset out;
  out.features.resize(static_cast<Index>(rows.size()), dim());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Index r = rows[k];
    if (r < 0 || r >= size()) throw ShapeError("subset row out of range");
    out.ids.push_back(ids[static_cast<std::size_t>(r)]);
    out.labels.push_back(labels[static_cast<std::size_t>(r)]);
    if (!ambiguous.empty()) out.ambiguous.push_back(ambiguous[static_cast<std::size_t>(r)]);
    out.features.row(static_cast<Index>(k)) = features.row(r);
  }
  return out;
}

Batch Dataset::batch(const std::vector<Index>& rows) const {
  Batch b;
  b.samples.reserve(rows.size());
  for (Index r : rows) {
    b.samples.push_back({features.row(r).transpose(), labels[static_cast<std::size_t>(r)], false});
  }
  return b;
}

namespace {

// Rows of `m` made orthonormal (modified Gram-Schmidt, two passes).
void orthonormalize_rows(RowMatrix& m) {
  for (int pass = 0; pass < 2; ++pass) {
    for (Index c = 0; c < m.rows(); ++c) {
      for (Index p = 0; p < c; ++p) m.row(c) -= m.row(c).dot(m.row(p)) * m.row(p);
      m.row(c).normalize();
    }
  }
}

RowMatrix gaussian_rows(Index rows, Index cols, Rng& rng) {
  RowMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

// Classes [lo, hi) of the split half containing c.
std::pair<int, int> half_of(int c, int n_classes) {
  const int boundary = n_classes / 2;
  return c < boundary ? std::pair{0, boundary} : std::pair{boundary, n_classes};
}

int other_in_half(int c, int n_classes, Rng& rng) {
  const auto [lo, hi] = half_of(c, n_classes);
  int other = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo - 1)));
  if (other >= c) ++other;
  return other;
}

}  // namespace

RowMatrix signal_basis(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).substream(0x62617369);
  RowMatrix q = gaussian_rows(cfg.signal_dim, cfg.input_dim, rng);
  orthonormalize_rows(q);
  return q;
}

RowMatrix class_means(const SynthConfig& cfg) {
  const RowMatrix basis = signal_basis(cfg);
  Rng rng = Rng(cfg.seed).substream(0x6d65616e);
  RowMatrix dirs = gaussian_rows(cfg.n_classes, cfg.signal_dim, rng);
  if (cfg.n_classes <= cfg.signal_dim) {
    orthonormalize_rows(dirs);
  } else {
    dirs.rowwise().normalize();
  }
  // Orthonormal rows sit sqrt(2) apart.
  return (dirs * basis) * (cfg.class_sep / std::sqrt(2.0));
}

Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const RowMatrix basis = signal_basis(cfg);
  const RowMatrix means = class_means(cfg);
  Rng rng = Rng(cfg.seed).substream(0x73616d70);
  const Index n = static_cast<Index>(cfg.n_classes) * cfg.per_class;
  const auto n_ambiguous = static_cast<int>(std::lround(cfg.ambiguous_frac * cfg.per_class));

  Dataset ds;
  ds.features.resize(n, cfg.input_dim);
  ds.ids.resize(static_cast<std::size_t>(n));
  ds.ambiguous.assign(static_cast<std::size_t>(n), false);
  std::vector<int> label(static_cast<std::size_t>(n));
  Vector z(cfg.input_dim);
  for (int c = 0; c < cfg.n_classes; ++c) {
    for (int k = 0; k < cfg.per_class; ++k) {
      const Index row = static_cast<Index>(c) * cfg.per_class + k;
      for (Index d = 0; d < z.size(); ++d) z(d) = rng.normal();
      const Vector z_signal = basis.transpose() * (basis * z);
      Vector noise = cfg.within_sigma * z_signal + cfg.nuisance_sigma * (z - z_signal);
      if (k < n_ambiguous) {
        const int other = other_in_half(c, cfg.n_classes, rng);
        const Vector mid = 0.5 * (means.row(c) + means.row(other)).transpose();
        // Along the line between the means, stay inside the middle half so
        // the sample is nearer the midpoint than either mean.
        const Vector axis = (means.row(c) - means.row(other)).transpose();
        const double half_gap = 0.25 * axis.norm();
        const Vector unit = axis.normalized();
        const double along = noise.dot(unit);
        const double limit = 0.9 * half_gap;
        if (std::abs(along) > limit) noise -= (along - std::copysign(limit, along)) * unit;
        ds.features.row(row) = (mid + noise).transpose();
        ds.ambiguous[static_cast<std::size_t>(row)] = true;
      } else {
        ds.features.row(row) = means.row(c) + noise.transpose();
      }
      ds.ids[static_cast<std::size_t>(row)] = row;
      label[static_cast<std::size_t>(row)] = c;
    }
  }

  const auto n_flip = static_cast<Index>(std::lround(cfg.mislabel_frac * static_cast<double>(n)));
  for (Index r : rng.sample_without_replacement(n, n_flip)) {
    auto& l = label[static_cast<std::size_t>(r)];
    l = other_in_half(l, cfg.n_classes, rng);
  }
  ds.labels.reserve(static_cast<std::size_t>(n));
  for (int l : label) ds.labels.push_back(LabelSet::single(l));
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

[[noreturn]] void csv_fail(std::size_t line_no, const std::string& msg) {
  throw FormatError("line " + std::to_string(line_no) + ": " + msg);
}

template <typename T>
bool parse_number(std::string_view field, T& out) {
  const char* first = field.data();
  const char* last = first + field.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && first != last;
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  out.append(buf, res.ptr);
}

}  // namespace

Dataset parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  };
  if (!next_line()) throw FormatError("line 1: empty file");
  const auto header = split_commas(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label") {
    csv_fail(line_no, "header must be id,label,f0,...");
  }
  const std::size_t dim = header.size() - 2;
  for (std::size_t d = 0; d < dim; ++d) {
    if (header[d + 2] != "f" + std::to_string(d)) csv_fail(line_no, "unexpected column name '" + std::string(header[d + 2]) + "'");
  }

  std::vector<std::int64_t> ids;
  std::vector<LabelSet> labels;
  std::vector<double> values;
  while (next_line()) {
    const auto fields = split_commas(line);
    if (fields.size() != dim + 2) {
      csv_fail(line_no, "expected " + std::to_string(dim + 2) + " columns, found " + std::to_string(fields.size()));
    }
    std::int64_t id = 0;
    if (!parse_number(fields[0], id)) csv_fail(line_no, "id '" + std::string(fields[0]) + "' is not an integer");
    std::set<int> label_ids;
    std::string_view lab = fields[1];
    while (true) {
      const std::size_t bar = lab.find('|');
      const std::string_view part = lab.substr(0, bar);
      int v = 0;
      if (!parse_number(part, v) || v < 0) csv_fail(line_no, "bad label '" + std::string(fields[1]) + "'");
      label_ids.insert(v);
      if (bar == std::string_view::npos) break;
      lab = lab.substr(bar + 1);
    }
    for (std::size_t d = 0; d < dim; ++d) {
      double v = 0.0;
      if (!parse_number(fields[d + 2], v) || !std::isfinite(v)) {
        csv_fail(line_no, "feature f" + std::to_string(d) + " = '" + std::string(fields[d + 2]) + "' is not a finite number");
      }
      values.push_back(v);
    }
    ids.push_back(id);
    labels.emplace_back(std::move(label_ids));
  }
  if (ids.empty()) throw FormatError("line " + std::to_string(line_no + 1) + ": no data rows");

  Dataset ds;
  ds.ids = std::move(ids);
  ds.labels = std::move(labels);
  ds.features = Eigen::Map<const RowMatrix>(values.data(), static_cast<Index>(ds.ids.size()), static_cast<Index>(dim));
  return ds;
}

std::string format_csv(const Dataset& ds) {
  ds.validate();
  std::string out = "id,label";
  for (Index d = 0; d < ds.dim(); ++d) out += ",f" + std::to_string(d);
  out += '\n';
  for (Index i = 0; i < ds.size(); ++i) {
    out += std::to_string(ds.ids[static_cast<std::size_t>(i)]);
    out += ',';
    out += ds.labels[static_cast<std::size_t>(i)].to_string();
    for (Index d = 0; d < ds.dim(); ++d) {
      out += ',';
      append_double(out, ds.features(i, d));
    }
    out += '\n';
  }
  return out;
}

void save_csv(const Dataset& ds, const std::string& path) {
  const std::string text = format_csv(ds);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path);
  os << text;
  if (!os) throw FormatError("failed writing " + path);
}

Dataset load_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_csv(buf.str());
}

// ---------------------------------------------------------------------------
// Binary

namespace {

constexpr char kDataMagic[4] = {'I', 'D', 'M', 'D'};
constexpr std::uint32_t kDataVersion = 1;

}  // namespace

void save_binary(const Dataset& ds, const std::string& path) {
  using detail::put_le;
  ds.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path);
  os.write(kDataMagic, 4);
  put_le<std::uint32_t>(os, kDataVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.size()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.dim()));
  for (Index i = 0; i < ds.size(); ++i) {
    put_le<std::int64_t>(os, ds.ids[static_cast<std::size_t>(i)]);
    const auto& l = ds.labels[static_cast<std::size_t>(i)];
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.size()));
    for (int c : l.ids()) put_le<std::int32_t>(os, c);
  }
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index d = 0; d < ds.dim(); ++d) put_le<double>(os, ds.features(i, d));
  }
  if (!os) throw FormatError("failed writing " + path);
}

Dataset load_binary(const std::string& path) {
  using detail::get_le;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kDataMagic, 4) != 0) throw FormatError("not an IDMD dataset: " + path);
  const auto version = get_le<std::uint32_t>(is, "dataset");
  if (version != kDataVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
  const auto rows = get_le<std::uint32_t>(is, "dataset");
  const auto dim = get_le<std::uint32_t>(is, "dataset");
  if (rows == 0 || dim == 0) throw FormatError("dataset is empty");
  Dataset ds;
  for (std::uint32_t i = 0; i < rows; ++i) {
    ds.ids.push_back(get_le<std::int64_t>(is, "dataset"));
    const auto n_labels = get_le<std::uint32_t>(is, "dataset");
    if (n_labels == 0) throw FormatError("row " + std::to_string(i) + " has no labels");
    std::set<int> ids;
    for (std::uint32_t k = 0; k < n_labels; ++k) {
      const auto c = get_le<std::int32_t>(is, "dataset");
      if (c < 0) throw FormatError("row " + std::to_string(i) + " has a negative label");
      ids.insert(c);
    }
    ds.labels.emplace_back(std::move(ids));
  }
  ds.features.resize(rows, dim);
  for (Index i = 0; i < ds.features.rows(); ++i) {
    for (Index d = 0; d < ds.features.cols(); ++d) ds.features(i, d) = get_le<double>(is, "dataset");
  }
  ds.validate();
  return ds;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (is.gcount() == 4 && std::memcmp(magic, kDataMagic, 4) == 0) return load_binary(path);
  return load_csv(path);
}

}  // namespace idml

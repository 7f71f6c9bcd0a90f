#include "dpm/dataio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace dpm {

namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

[[noreturn]] void format_error(const fs::path& path, const std::string& what,
                               ErrorCode code = ErrorCode::Format) {
  throw Error(code, path.filename().string() + ": " + what);
}

std::uint32_t read_be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

// ---------------------------------------------------------------------------
// netpbm

class PnmCursor {
 public:
  PnmCursor(const std::vector<unsigned char>& bytes, const fs::path& path) : bytes_(bytes), path_(path) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) format_error(path_, "truncated header", ErrorCode::Truncated);
    if (!std::isdigit(bytes_[pos_])) format_error(path_, "expected a number in header");
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_++] - '0');
      if (v > (std::size_t{1} << 31)) format_error(path_, "header value too large");
    }
    return v;
  }

  // Single whitespace byte separating the header from a binary raster.
  void raster_separator() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) format_error(path_, "missing raster separator");
    ++pos_;
  }

  int bit_char() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) format_error(path_, "truncated pixel data", ErrorCode::Truncated);
    const unsigned char c = bytes_[pos_++];
    if (c != '0' && c != '1') format_error(path_, "invalid PBM pixel");
    return c - '0';
  }

  void expect_end() {
    skip_space_and_comments();
    if (pos_ != bytes_.size()) format_error(path_, "size mismatch: trailing data after raster");
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const unsigned char* here() const { return bytes_.data() + pos_; }
  bool at_end() const { return pos_ >= bytes_.size(); }

 private:
  const std::vector<unsigned char>& bytes_;
  const fs::path& path_;
  std::size_t pos_ = 0;
};

struct PnmImage {
  ImageShape shape;
  bool binary = false;
  std::vector<double> pixels;
};

PnmImage parse_netpbm(const fs::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] < '1' || bytes[1] > '5' || bytes[1] == '3')
    format_error(path, "unknown netpbm magic (expected P1, P2, P4 or P5)");
  const char variant = static_cast<char>(bytes[1]);
  PnmCursor cur(bytes, path);
  cur.advance(2);

  PnmImage img;
  img.shape.cols = cur.number();
  img.shape.rows = cur.number();
  if (img.shape.cols == 0 || img.shape.rows == 0) format_error(path, "image has zero size");
  const std::size_t count = img.shape.rows * img.shape.cols;
  img.binary = variant == '1' || variant == '4';
  std::size_t maxval = 1;
  if (!img.binary) {
    maxval = cur.number();
    if (maxval == 0 || maxval > 255) format_error(path, "maxval must be in 1..255");
  }
  img.pixels.resize(count);

  switch (variant) {
    case '1':
      for (auto& p : img.pixels) p = cur.bit_char();
      cur.expect_end();
      break;
    case '2':
      for (auto& p : img.pixels) {
        cur.skip_space_and_comments();
        if (cur.at_end()) format_error(path, "truncated pixel data", ErrorCode::Truncated);
        const std::size_t v = cur.number();
        if (v > maxval) format_error(path, "pixel exceeds maxval");
        p = static_cast<double>(v) / static_cast<double>(maxval);
      }
      cur.expect_end();
      break;
    case '4': {
      cur.raster_separator();
      const std::size_t stride = (img.shape.cols + 7) / 8;
      if (cur.remaining() < stride * img.shape.rows) format_error(path, "truncated raster", ErrorCode::Truncated);
      if (cur.remaining() > stride * img.shape.rows) format_error(path, "size mismatch: trailing data after raster");
      for (std::size_t r = 0; r < img.shape.rows; ++r)
        for (std::size_t c = 0; c < img.shape.cols; ++c)
          img.pixels[r * img.shape.cols + c] = (cur.here()[r * stride + c / 8] >> (7 - c % 8)) & 1;
      break;
    }
    case '5': {
      cur.raster_separator();
      if (cur.remaining() < count) format_error(path, "truncated raster", ErrorCode::Truncated);
      if (cur.remaining() > count) format_error(path, "size mismatch: trailing data after raster");
      for (std::size_t i = 0; i < count; ++i) {
        const unsigned v = cur.here()[i];
        if (v > maxval) format_error(path, "pixel exceeds maxval");
        img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
      }
      break;
    }
  }
  return img;
}

bool is_netpbm_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pbm" || ext == ".pgm" || ext == ".pnm";
}

// ---------------------------------------------------------------------------
// CSV

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool parse_number(std::string_view cell, double& out) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  if (cell.empty()) return false;
  const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && end == cell.data() + cell.size() && std::isfinite(out);
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

// ---------------------------------------------------------------------------
// model file

constexpr char kModelMagic[4] = {'D', 'P', 'M', '1'};
constexpr std::size_t kModelHeader = 4 + 1 + 4 + 4;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

}  // namespace

void Dataset::validate() const {
  if (shape_hint && shape_hint->rows * shape_hint->cols != d() && n() > 0)
    throw Error(ErrorCode::Domain, "shape hint does not match dimension");
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double v = data.data()[i];
    if (!std::isfinite(v)) throw Error(ErrorCode::Domain, "dataset contains a non-finite value");
    if (kind == DataKind::Binary && v != 0.0 && v != 1.0)
      throw Error(ErrorCode::Domain, "binary dataset contains a value other than 0 or 1");
  }
}

Dataset gen_synthetic() {
  constexpr int kPairs = 5;
  Dataset ds;
  ds.kind = DataKind::Binary;
  ds.data = Matrix::Zero(1 << kPairs, 2 * kPairs);
  for (int i = 0; i < (1 << kPairs); ++i) {
    for (int l = 0; l < kPairs; ++l) {
      // Most significant bit first: bit 0 -> (0,1), bit 1 -> (1,0).
      const bool flipped = (i >> (kPairs - 1 - l)) & 1;
      ds.data(i, 2 * l) = flipped ? 1.0 : 0.0;
      ds.data(i, 2 * l + 1) = flipped ? 0.0 : 1.0;
    }
  }
  return ds;
}

Dataset read_idx(const fs::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < 4) format_error(path, "truncated header", ErrorCode::Truncated);
  const std::uint32_t magic = read_be32(bytes.data());
  if (magic == 0x00000801) format_error(path, "IDX label file (magic 0x00000801) cannot be used as training data");
  if (magic != 0x00000803) format_error(path, "bad IDX magic (expected 0x00000803)");
  if (bytes.size() < 16) format_error(path, "truncated header", ErrorCode::Truncated);
  const std::uint64_t n = read_be32(bytes.data() + 4);
  const std::uint64_t rows = read_be32(bytes.data() + 8);
  const std::uint64_t cols = read_be32(bytes.data() + 12);
  if (rows == 0 || cols == 0) format_error(path, "image dimensions must be positive");
  const std::uint64_t dims = rows * cols;  // both < 2^32, cannot overflow
  if (dims > std::numeric_limits<std::uint32_t>::max() || (n != 0 && dims > (std::uint64_t{1} << 40) / n))
    format_error(path, "dimension overflow");
  const std::uint64_t payload = n * dims;
  if (bytes.size() - 16 < payload) format_error(path, "truncated payload", ErrorCode::Truncated);
  if (bytes.size() - 16 > payload) format_error(path, "size mismatch: trailing data after payload");

  Dataset ds;
  ds.kind = DataKind::Continuous;
  ds.shape_hint = ImageShape{static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)};
  ds.data.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims));
  const unsigned char* px = bytes.data() + 16;
  for (std::uint64_t i = 0; i < payload; ++i) ds.data.data()[i] = px[i] / 255.0;
  return ds;
}

Dataset binarize(const Dataset& data, double threshold) {
  if (data.kind == DataKind::Binary) throw Error(ErrorCode::InvalidArgument, "dataset is already binary");
  Dataset out = data;
  out.kind = DataKind::Binary;
  out.data = (data.data.array() >= threshold).cast<double>().matrix();
  return out;
}

Dataset read_netpbm(const fs::path& path) {
  auto img = parse_netpbm(path);
  Dataset ds;
  ds.kind = img.binary ? DataKind::Binary : DataKind::Continuous;
  ds.shape_hint = img.shape;
  ds.data = Eigen::Map<const Matrix>(img.pixels.data(), 1, static_cast<Eigen::Index>(img.pixels.size()));
  return ds;
}

Dataset read_netpbm_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && is_netpbm_file(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  Dataset ds;
  ds.kind = DataKind::Binary;
  if (files.empty()) return ds;
  std::vector<PnmImage> images;
  images.reserve(files.size());
  for (const auto& f : files) {
    images.push_back(parse_netpbm(f));
    if (images.back().shape != images.front().shape)
      format_error(f, "image size differs from " + files.front().filename().string());
    if (!images.back().binary) ds.kind = DataKind::Continuous;
  }
  ds.shape_hint = images.front().shape;
  const auto dims = static_cast<Eigen::Index>(images.front().pixels.size());
  ds.data.resize(static_cast<Eigen::Index>(images.size()), dims);
  for (std::size_t i = 0; i < images.size(); ++i)
    ds.data.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(images[i].pixels.data(), dims);
  return ds;
}

void write_pgm(std::span<const double> pixels, ImageShape shape, const fs::path& path) {
  if (shape.rows * shape.cols != pixels.size())
    throw Error(ErrorCode::InvalidArgument, "pixel count does not match image shape");
  auto out = open_out(path);
  out << "P5\n" << shape.cols << ' ' << shape.rows << "\n255\n";
  std::string raster(pixels.size(), '\0');
  for (std::size_t i = 0; i < pixels.size(); ++i) raster[i] = static_cast<char>(to_byte(pixels[i]));
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  finish(out, path);
}

Dataset read_csv(const fs::path& path, DataKind kind) {
  const auto bytes = slurp(path);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());

  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    const auto cells = split(line);
    std::vector<double> parsed(cells.size());
    bool numeric = true;
    for (std::size_t c = 0; c < cells.size(); ++c) numeric = numeric && parse_number(cells[c], parsed[c]);
    if (!numeric) {
      if (rows == 0 && cols == 0) {
        cols = cells.size();  // header
        continue;
      }
      format_error(path, "line " + std::to_string(line_no) + ": non-numeric cell");
    }
    if (cols == 0) cols = cells.size();
    if (cells.size() != cols)
      format_error(path, "line " + std::to_string(line_no) + ": ragged row (" + std::to_string(cells.size()) +
                             " cells, expected " + std::to_string(cols) + ")");
    for (double v : parsed) {
      if (kind == DataKind::Binary && v != 0.0 && v != 1.0)
        format_error(path, "line " + std::to_string(line_no) + ": binary data must be 0 or 1", ErrorCode::Domain);
      values.push_back(v);
    }
    ++rows;
  }

  Dataset ds;
  ds.kind = kind;
  if (rows == 0) {
    ds.data.resize(0, static_cast<Eigen::Index>(cols));
    return ds;
  }
  ds.data = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  return ds;
}

void write_csv(const Dataset& data, const fs::path& path) {
  auto out = open_out(path);
  char buf[64];
  for (Eigen::Index i = 0; i < data.data.rows(); ++i) {
    for (Eigen::Index d = 0; d < data.data.cols(); ++d) {
      if (d) out << ',';
      const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, data.data(i, d));
      out.write(buf, end - buf);
    }
    out << '\n';
  }
  finish(out, path);
}

void save_model(const ExpertBank& bank, const fs::path& path) {
  bank.validate(Clamps{std::numeric_limits<double>::min(), std::numeric_limits<double>::min(),
                       std::numeric_limits<double>::min(), std::numeric_limits<double>::max()});
  if (bank.num_experts() > std::numeric_limits<std::uint32_t>::max() ||
      bank.num_dims() > std::numeric_limits<std::uint32_t>::max())
    throw Error(ErrorCode::InvalidArgument, "bank too large for model file");
  std::string buf(kModelMagic, sizeof kModelMagic);
  buf.push_back(static_cast<char>(bank.kind));
  put_u32(buf, static_cast<std::uint32_t>(bank.num_experts()));
  put_u32(buf, static_cast<std::uint32_t>(bank.num_dims()));
  const auto dump = [&](const Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(buf, m.data()[i]);
  };
  dump(bank.mu);
  if (bank.gaussian()) dump(bank.var);
  dump(bank.expertise);
  auto out = open_out(path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  finish(out, path);
}

ExpertBank load_model(const fs::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < kModelHeader) format_error(path, "truncated header", ErrorCode::Truncated);
  if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) format_error(path, "bad model magic (expected DPM1)");
  const unsigned kind = bytes[4];
  if (kind > 1) format_error(path, "unknown observation model byte");
  const std::uint64_t k = get_u32(bytes.data() + 5);
  const std::uint64_t d = get_u32(bytes.data() + 9);
  if (k == 0 || d == 0) format_error(path, "model must have K >= 1 and D >= 1");
  const std::uint64_t blocks = kind == 1 ? 3 : 2;
  const std::uint64_t available = (bytes.size() - kModelHeader) / 8;
  if (k * d > available / blocks) format_error(path, "truncated payload", ErrorCode::Truncated);
  if (bytes.size() != kModelHeader + 8 * blocks * k * d) {
    if (bytes.size() < kModelHeader + 8 * blocks * k * d) format_error(path, "truncated payload", ErrorCode::Truncated);
    format_error(path, "size mismatch: trailing bytes after payload");
  }

  ExpertBank bank;
  bank.kind = static_cast<ObservationModel>(kind);
  const unsigned char* p = bytes.data() + kModelHeader;
  const auto fill = [&](Matrix& m) {
    m.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < m.size(); ++i, p += 8) {
      m.data()[i] = get_f64(p);
      if (std::isnan(m.data()[i])) format_error(path, "NaN in payload");
    }
  };
  fill(bank.mu);
  if (bank.gaussian()) fill(bank.var);
  fill(bank.expertise);
  try {
    bank.validate(Clamps{std::numeric_limits<double>::min(), std::numeric_limits<double>::min(),
                         std::numeric_limits<double>::min(), std::numeric_limits<double>::max()});
  } catch (const Error& e) {
    format_error(path, e.what());
  }
  return bank;
}

void export_template_grid(const ExpertBank& bank, ImageShape shape, const fs::path& out_dir) {
  if (shape.rows * shape.cols != bank.num_dims()) {
    std::ostringstream msg;
    msg << "shape " << shape.rows << "x" << shape.cols << " does not match model dimension " << bank.num_dims();
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  const Matrix log_e = bank.expertise.array().log2().matrix();
  const double lo = log_e.minCoeff();
  const double hi = log_e.maxCoeff();
  std::vector<double> pixels(bank.num_dims());
  for (Eigen::Index k = 0; k < bank.mu.rows(); ++k) {
    for (Eigen::Index d = 0; d < bank.mu.cols(); ++d) pixels[d] = 1.0 - bank.mu(k, d);
    write_pgm(pixels, shape, out_dir / ("expert_" + std::to_string(k) + "_mu.pgm"));
    for (Eigen::Index d = 0; d < bank.mu.cols(); ++d)
      pixels[d] = hi > lo ? (log_e(k, d) - lo) / (hi - lo) : 0.5;
    write_pgm(pixels, shape, out_dir / ("expert_" + std::to_string(k) + "_e.pgm"));
  }
}

}  // namespace dpm

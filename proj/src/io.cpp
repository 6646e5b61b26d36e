#include "trajloom/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace trajloom {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace {

class Writer {
 public:
  template <typename T>
  void put(const T& v) {
    const char* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_raw(const void* data, std::size_t n) {
    const char* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_raw(s.data(), s.size());
  }
  std::vector<char> take() { return std::move(bytes_); }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<char>& bytes, const char* what) : bytes_(bytes), what_(what) {}

  template <typename T>
  T get() {
    T v;
    get_raw(&v, sizeof(T));
    return v;
  }
  void get_raw(void* out, std::size_t n) {
    if (n > bytes_.size() - pos_)
      throw FormatError(std::string(what_) + ": truncated at byte " + std::to_string(pos_) + " (need " +
                        std::to_string(n) + " more)");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    get_raw(s.data(), n);
    return s;
  }
  void expect_magic(const char (&magic)[5]) {
    char m[4];
    get_raw(m, 4);
    if (std::memcmp(m, magic, 4) != 0) throw FormatError(std::string(what_) + ": bad magic, expected " + magic);
  }
  void expect_end() const {
    if (pos_ != bytes_.size())
      throw FormatError(std::string(what_) + ": " + std::to_string(bytes_.size() - pos_) + " trailing bytes");
  }

 private:
  const std::vector<char>& bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

}  // namespace

void TlfFile::validate() const {
  if (height <= 0 || width <= 0 || stride <= 0) throw FormatError("tlf: frame size and stride must be positive");
  if (data.frames <= 0 || data.rows <= 0 || data.cols <= 0) throw FormatError("tlf: empty grid");
  if (static_cast<std::uint32_t>(convention) > 2) throw FormatError("tlf: unknown coordinate convention");
  if (data.coords.rows() != data.frames * data.points() || data.mask.size() != data.coords.rows())
    throw FormatError("tlf: payload does not match header");
  if ((data.mask > 1).any()) throw FormatError("tlf: visibility must be 0 or 1");
}

std::vector<char> encode_tlf(const TlfFile& f) {
  f.validate();
  Writer w;
  w.put_raw("TRJF", 4);
  w.put(TlfFile::kVersion);
  for (int v : {f.data.frames, f.data.rows, f.data.cols, f.height, f.width, f.stride}) w.put(static_cast<std::uint32_t>(v));
  w.put(static_cast<std::uint32_t>(f.convention));
  w.put_raw(f.data.coords.data(), sizeof(float) * static_cast<std::size_t>(f.data.coords.size()));
  w.put_raw(f.data.mask.data(), static_cast<std::size_t>(f.data.mask.size()));
  return w.take();
}

TlfFile decode_tlf(const std::vector<char>& bytes) {
  Reader r(bytes, "tlf");
  r.expect_magic("TRJF");
  const auto version = r.get<std::uint32_t>();
  if (version != TlfFile::kVersion) throw FormatError("tlf: unsupported version " + std::to_string(version));
  std::uint32_t h[7];
  for (std::uint32_t& v : h) v = r.get<std::uint32_t>();
  for (int i = 0; i < 6; ++i)
    if (h[i] == 0 || h[i] > (1u << 20)) throw FormatError("tlf: header field " + std::to_string(i) + " out of range");
  if (h[6] > 2) throw FormatError("tlf: unknown coordinate convention " + std::to_string(h[6]));
  const std::uint64_t n = std::uint64_t{h[0]} * h[1] * h[2];
  if (bytes.size() != 36 + n * 9)
    throw FormatError("tlf: payload is " + std::to_string(bytes.size() - 36) + " bytes, header implies " +
                      std::to_string(n * 9));
  TlfFile f;
  f.data = GridSeries<float>(static_cast<int>(h[0]), static_cast<int>(h[1]), static_cast<int>(h[2]));
  f.height = static_cast<int>(h[3]);
  f.width = static_cast<int>(h[4]);
  f.stride = static_cast<int>(h[5]);
  f.convention = static_cast<CoordConvention>(h[6]);
  r.get_raw(f.data.coords.data(), sizeof(float) * n * 2);
  r.get_raw(f.data.mask.data(), n);
  r.expect_end();
  f.validate();
  return f;
}

std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

void write_tlf(const std::filesystem::path& path, const TlfFile& file) { write_bytes(path, encode_tlf(file)); }
TlfFile read_tlf(const std::filesystem::path& path) { return decode_tlf(read_bytes(path)); }

TlfFile tlf_from_tracks(const SparseTracks<double>& tracks) {
  TlfFile f;
  f.height = tracks.geometry.height;
  f.width = tracks.geometry.width;
  f.stride = tracks.geometry.stride;
  f.convention = CoordConvention::absolute_pixel;
  f.data = tracks.points.cast<float>();
  return f;
}

TlfFile tlf_from_dense(const DenseField<float>& field) {
  TlfFile f;
  f.height = field.height();
  f.width = field.width();
  f.stride = field.stride;
  f.convention = CoordConvention::absolute_normalized;
  f.data = field.points;
  return f;
}

TlfFile tlf_from_offsets(const OffsetField<float>& field) {
  TlfFile f = tlf_from_dense({field.points, field.stride});
  f.convention = CoordConvention::offset;
  return f;
}

SparseTracks<double> tracks_from_tlf(const TlfFile& file) {
  file.validate();
  if (file.convention != CoordConvention::absolute_pixel)
    throw FormatError("tlf: expected absolute-pixel coordinates for sparse tracks");
  SparseTracks<double> t;
  t.geometry = {file.height, file.width, file.stride};
  t.points = file.data.cast<double>();
  if (t.points.rows != t.geometry.grid_rows() || t.points.cols != t.geometry.grid_cols())
    throw FormatError("tlf: track grid " + shape_str(t.points.rows, t.points.cols) + " does not match H/s x W/s");
  return t;
}

std::vector<char> encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.put_raw("TRJP", 4);
  w.put(Checkpoint::kVersion);
  w.put(static_cast<std::uint32_t>(c.meta.size()));
  for (const auto& [k, v] : c.meta) {
    w.put_string(k);
    w.put_string(v);
  }
  w.put(static_cast<std::uint32_t>(c.params.size()));
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    const Mat& m = c.params[i];
    w.put_string(c.params.name(i));
    w.put(static_cast<std::uint32_t>(m.rows()));
    w.put(static_cast<std::uint32_t>(m.cols()));
    w.put_raw(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<char>& bytes) {
  Reader r(bytes, "checkpoint");
  r.expect_magic("TRJP");
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint c;
  const auto nmeta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = r.get_string();
    c.meta[k] = r.get_string();
  }
  const auto nblocks = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < nblocks; ++i) {
    std::string name = r.get_string();
    const auto rows = r.get<std::uint32_t>(), cols = r.get<std::uint32_t>();
    if (std::uint64_t{rows} * cols > bytes.size()) throw FormatError("checkpoint: block " + name + " too large");
    Mat m(rows, cols);
    r.get_raw(m.data(), sizeof(double) * std::size_t{rows} * cols);
    c.params.add(std::move(name), std::move(m));
  }
  r.expect_end();
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) { write_bytes(path, encode_checkpoint(c)); }
Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_bytes(path)); }

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace

std::string CsvTable::str() const {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << csv_field(fields[i]);
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw ShapeError("csv: row width does not match header");
    line(r);
  }
  return out.str();
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  const std::string s = table.str();
  write_bytes(path, std::vector<char>(s.begin(), s.end()));
}

CsvTable read_csv(const std::filesystem::path& path) {
  const std::vector<char> bytes = read_bytes(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      t.header = split_csv_line(line);
      first = false;
    } else {
      t.rows.push_back(split_csv_line(line));
    }
  }
  if (first) throw FormatError("csv: missing header in " + path.string());
  return t;
}

}  // namespace trajloom

/*
 * Copyright (c) 2026, The gradnet authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dataio.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "rng.hpp"

namespace gradnet {

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

namespace {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void magic(const char (&m)[5]) { raw(m, 4); }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void i32(std::int32_t v) { raw(&v, 4); }
  void f32s(std::span<const float> v) { raw(v.data(), v.size() * 4); }
  void text(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string format)
      : bytes_(bytes), format_(std::move(format)) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorKind::Format, format_ + ": truncated payload reading " + what + " at byte offset " +
                                  std::to_string(pos_) + " (need " + std::to_string(n) + ", have " +
                                  std::to_string(bytes_.size() - pos_) + ")");
    }
  }
  void magic(const char (&m)[5]) {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), m, 4) != 0) {
      fail(ErrorKind::Format, format_ + ": bad magic at byte offset 0");
    }
    pos_ = 4;
  }
  void version(std::uint32_t expected) {
    const auto at = pos_;
    const auto v = u32("version");
    if (v != expected) {
      fail(ErrorKind::Format, format_ + ": version mismatch at byte offset " + std::to_string(at) + " (found " +
                                  std::to_string(v) + ", expected " + std::to_string(expected) + ")");
    }
  }
  template <class V>
  V scalar(const char* what) {
    need(sizeof(V), what);
    V v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  std::uint8_t u8(const char* what) { return scalar<std::uint8_t>(what); }
  std::uint32_t u32(const char* what) { return scalar<std::uint32_t>(what); }
  std::uint64_t u64(const char* what) { return scalar<std::uint64_t>(what); }

  // Guards n * elem against overflow and the remaining length before allocating.
  std::size_t count_bytes(std::uint64_t n, std::size_t elem, const char* what) const {
    if (elem != 0 && n > (bytes_.size() - pos_) / elem) need(bytes_.size() - pos_ + 1, what);
    return static_cast<std::size_t>(n) * elem;
  }
  template <class V>
  std::vector<V> array(std::uint64_t n, const char* what) {
    const auto nbytes = count_bytes(n, sizeof(V), what);
    std::vector<V> out(static_cast<std::size_t>(n));
    if (nbytes) std::memcpy(out.data(), bytes_.data() + pos_, nbytes);
    pos_ += nbytes;
    return out;
  }
  std::string string(std::uint64_t n, const char* what) {
    const auto nbytes = count_bytes(n, 1, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), nbytes);
    pos_ += nbytes;
    return s;
  }
  std::string text(const char* what) { return string(u64(what), what); }

  std::size_t pos() const { return pos_; }
  void finish() const {
    if (pos_ != bytes_.size()) {
      fail(ErrorKind::Format, format_ + ": " + std::to_string(bytes_.size() - pos_) +
                                  " trailing bytes at byte offset " + std::to_string(pos_));
    }
  }
  [[noreturn]] void error(const std::string& what, std::size_t at) const {
    fail(ErrorKind::Format, format_ + ": " + what + " at byte offset " + std::to_string(at));
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string format_;
  std::size_t pos_ = 0;
};

}  // namespace

// ---------------------------------------------------------------------------
// FeatureMatrix

FeatureMatrix FeatureMatrix::from_matrix(DenseMatrix data, std::optional<std::vector<std::int32_t>> labels) {
  FeatureMatrix f;
  f.ids.reserve(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) f.ids.push_back(std::to_string(i));
  f.data = std::move(data);
  f.labels = std::move(labels);
  return f;
}

void FeatureMatrix::validate() const {
  expect(ids.size() == n(), ErrorKind::Data, "feature ids: expected " + std::to_string(n()) + ", got " +
                                                 std::to_string(ids.size()));
  if (labels) {
    expect(labels->size() == n(), ErrorKind::Data, "feature labels length != n");
  }
  std::unordered_set<std::string> seen(ids.begin(), ids.end());
  expect(seen.size() == ids.size(), ErrorKind::Data, "feature ids are not unique");
  expect(all_finite(data), ErrorKind::Data, "features contain non-finite values");
}

FeatureMatrix FeatureMatrix::subset(std::span<const std::size_t> rows) const {
  FeatureMatrix out;
  out.data = gather_rows(data, rows);
  for (auto r : rows) out.ids.push_back(ids.at(r));
  if (labels) {
    out.labels.emplace();
    for (auto r : rows) out.labels->push_back(labels->at(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// .fmat

std::vector<std::uint8_t> encode_fmat(const FeatureMatrix& f) {
  f.validate();
  ByteWriter w;
  w.magic("FMAT");
  w.u32(kFmatVersion);
  w.u64(f.n());
  w.u64(f.d());
  w.u8(f.labels ? 1 : 0);
  w.f32s(f.data.values());
  if (f.labels) {
    for (auto l : *f.labels) w.i32(l);
  }
  for (const auto& id : f.ids) {
    w.u32(static_cast<std::uint32_t>(id.size()));
    w.raw(id.data(), id.size());
  }
  return w.take();
}

FeatureMatrix decode_fmat(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "fmat");
  r.magic("FMAT");
  r.version(kFmatVersion);
  const auto n = r.u64("n");
  const auto d = r.u64("d");
  const auto flag_at = r.pos();
  const auto has_labels = r.u8("has_labels");
  if (has_labels > 1) r.error("has_labels must be 0 or 1", flag_at);
  if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) r.error("n*d overflows", flag_at);
  FeatureMatrix f;
  f.data = DenseMatrix(n, d, r.array<float>(n * d, "feature payload"));
  if (has_labels) f.labels = r.array<std::int32_t>(n, "labels");
  f.ids.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, bytes.size())));
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto len = r.u32("id length");
    f.ids.push_back(r.string(len, "id bytes"));
  }
  r.finish();
  f.validate();
  return f;
}

void write_fmat(const FeatureMatrix& f, const std::filesystem::path& path) { write_file_bytes(path, encode_fmat(f)); }

FeatureMatrix read_fmat(const std::filesystem::path& path) { return decode_fmat(read_file_bytes(path)); }

// ---------------------------------------------------------------------------
// .csrg

std::vector<std::uint8_t> encode_csrg(const SparseMatrix& m, const std::string& meta) {
  ByteWriter w;
  w.magic("CSRG");
  w.u32(kCsrgVersion);
  w.u64(m.rows());
  w.u64(m.cols());
  w.u64(m.nnz());
  for (auto p : m.row_ptr()) w.u64(p);
  for (auto c : m.col_idx()) w.u64(c);
  w.f32s(m.values());
  w.text(meta);
  return w.take();
}

SparseFile decode_csrg(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "csrg");
  r.magic("CSRG");
  r.version(kCsrgVersion);
  const auto rows = r.u64("rows");
  const auto cols = r.u64("cols");
  const auto nnz = r.u64("nnz");
  const auto at = r.pos();
  if (rows == std::numeric_limits<std::uint64_t>::max()) r.error("row count overflows", at);
  auto ptr = r.array<std::uint64_t>(rows + 1, "row pointers");
  auto idx = r.array<std::uint64_t>(nnz, "column indices");
  auto val = r.array<float>(nnz, "values");
  SparseFile out;
  out.meta = r.text("meta");
  r.finish();
  try {
    out.matrix = SparseMatrix(rows, cols, std::vector<std::size_t>(ptr.begin(), ptr.end()),
                              std::vector<std::size_t>(idx.begin(), idx.end()), std::move(val));
  } catch (const Error& e) {
    r.error(std::string("invalid CSR structure (") + e.what() + ")", at);
  }
  return out;
}

void write_csrg(const SparseMatrix& m, const std::filesystem::path& path, const std::string& meta) {
  write_file_bytes(path, encode_csrg(m, meta));
}

SparseFile read_csrg(const std::filesystem::path& path) { return decode_csrg(read_file_bytes(path)); }

// ---------------------------------------------------------------------------
// .ckpt

std::vector<std::uint8_t> encode_ckpt(const CheckpointData& c) {
  const std::size_t layers = c.w1.size();
  expect(layers >= 1 && c.dims.size() == layers + 1 && c.w2.size() == layers, ErrorKind::State,
         "checkpoint: dims/layer count mismatch");
  ByteWriter w;
  w.magic("GDNC");
  w.u32(kCkptVersion);
  w.u32(static_cast<std::uint32_t>(layers));
  for (auto d : c.dims) w.u64(d);
  for (std::size_t l = 0; l < layers; ++l) {
    for (const auto* m : {&c.w1[l], &c.w2[l]}) {
      expect(m->rows() == c.dims[l] && m->cols() == c.dims[l + 1], ErrorKind::State,
             "checkpoint: weight shape does not match dims at layer " + std::to_string(l));
      w.f32s(m->values());
    }
  }
  w.text(c.config);
  w.u64(c.feature_hash);
  w.u8(c.state ? 1 : 0);
  if (c.state) {
    const auto& s = *c.state;
    w.u64(s.timestep);
    w.u64(s.epoch);
    for (auto v : s.rng_state) w.u64(v);
    for (std::size_t l = 0; l < layers; ++l) {
      for (const auto* m : {&s.m1.at(l), &s.v1.at(l), &s.m2.at(l), &s.v2.at(l)}) {
        expect(m->rows() == c.dims[l] && m->cols() == c.dims[l + 1], ErrorKind::State,
               "checkpoint: optimizer moment shape mismatch");
        w.f32s(m->values());
      }
    }
  }
  return w.take();
}

CheckpointData decode_ckpt(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "ckpt");
  r.magic("GDNC");
  r.version(kCkptVersion);
  const auto at = r.pos();
  const auto layers = r.u32("layer count");
  if (layers == 0) r.error("layer count is zero", at);
  CheckpointData c;
  for (std::uint32_t i = 0; i <= layers; ++i) c.dims.push_back(r.u64("dims"));
  auto read_weights = [&](std::size_t l) {
    const auto rows = c.dims[l], cols = c.dims[l + 1];
    if (cols != 0 && rows > std::numeric_limits<std::uint64_t>::max() / cols) r.error("weight size overflows", r.pos());
    return DenseMatrix(rows, cols, r.array<float>(rows * cols, "weights"));
  };
  for (std::size_t l = 0; l < layers; ++l) {
    c.w1.push_back(read_weights(l));
    c.w2.push_back(read_weights(l));
  }
  c.config = r.text("config");
  c.feature_hash = r.u64("feature hash");
  const auto flag_at = r.pos();
  const auto has_state = r.u8("has_state");
  if (has_state > 1) r.error("has_state must be 0 or 1", flag_at);
  if (has_state) {
    OptimizerSnapshot s;
    s.timestep = r.u64("timestep");
    s.epoch = r.u64("epoch");
    for (auto& v : s.rng_state) v = r.u64("rng state");
    for (std::size_t l = 0; l < layers; ++l) {
      s.m1.push_back(read_weights(l));
      s.v1.push_back(read_weights(l));
      s.m2.push_back(read_weights(l));
      s.v2.push_back(read_weights(l));
    }
    c.state = std::move(s);
  }
  r.finish();
  return c;
}

void write_ckpt(const CheckpointData& c, const std::filesystem::path& path) { write_file_bytes(path, encode_ckpt(c)); }

CheckpointData read_ckpt(const std::filesystem::path& path) { return decode_ckpt(read_file_bytes(path)); }

// ---------------------------------------------------------------------------
// files

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

std::uint64_t content_hash(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t file_content_hash(const std::filesystem::path& path) { return content_hash(read_file_bytes(path)); }

// ---------------------------------------------------------------------------
// toy dataset

namespace {

constexpr double kLetterScale = 0.3;  // letter height in word units
// Unscaled x offset per letter; adjacent letters come within 0.1 of each other.
constexpr std::array<double, 4> kLetterOffset{0.0, 0.5, 1.2, 1.9};

std::vector<Segment> place(std::vector<Segment> segs, std::size_t slot) {
  for (auto& s : segs) {
    for (auto* p : {&s.a, &s.b}) {
      (*p)[0] = ((*p)[0] + kLetterOffset[slot]) * kLetterScale;
      (*p)[1] = (*p)[1] * kLetterScale;
    }
  }
  return segs;
}

std::vector<Segment> letter_p() {
  // Stem plus a bowl: two horizontals joined by a half circle of radius 0.25.
  std::vector<Segment> s{{{0.0, 0.0}, {0.0, 1.0}}, {{0.0, 1.0}, {0.35, 1.0}}, {{0.0, 0.5}, {0.35, 0.5}}};
  constexpr int kArc = 8;
  for (int i = 0; i < kArc; ++i) {
    const double t0 = std::numbers::pi / 2 - std::numbers::pi * i / kArc;
    const double t1 = std::numbers::pi / 2 - std::numbers::pi * (i + 1) / kArc;
    s.push_back({{0.35 + 0.25 * std::cos(t0), 0.75 + 0.25 * std::sin(t0)},
                 {0.35 + 0.25 * std::cos(t1), 0.75 + 0.25 * std::sin(t1)}});
  }
  return s;
}

std::vector<Segment> letter_a() {
  return {{{0.0, 0.0}, {0.3, 1.0}}, {{0.3, 1.0}, {0.6, 0.0}}, {{0.12, 0.4}, {0.48, 0.4}}};
}

std::vector<Segment> letter_m() {
  return {{{0.0, 0.0}, {0.0, 1.0}}, {{0.0, 1.0}, {0.3, 0.45}}, {{0.3, 0.45}, {0.6, 1.0}}, {{0.6, 1.0}, {0.6, 0.0}}};
}

std::vector<Segment> letter_i() { return {{{0.0, 0.0}, {0.0, 1.0}}}; }

double seg_length(const Segment& s) { return std::hypot(s.b[0] - s.a[0], s.b[1] - s.a[1]); }

}  // namespace

const std::array<std::vector<Segment>, 4>& toy_letter_strokes() {
  static const std::array<std::vector<Segment>, 4> strokes{place(letter_p(), 0), place(letter_a(), 1),
                                                           place(letter_m(), 2), place(letter_i(), 3)};
  return strokes;
}

FeatureMatrix generate_toy(std::size_t points_per_letter, double noise_sigma, std::uint64_t seed) {
  expect(points_per_letter >= 1, ErrorKind::Parameter, "points_per_letter must be >= 1");
  expect(noise_sigma >= 0.0 && std::isfinite(noise_sigma), ErrorKind::Parameter, "noise_sigma must be >= 0");
  Rng rng(seed);
  const auto& letters = toy_letter_strokes();
  const std::size_t n = points_per_letter * letters.size();
  DenseMatrix data(n, 2);
  std::vector<std::int32_t> labels(n);
  std::vector<std::string> ids(n);
  std::size_t row = 0;
  for (std::size_t letter = 0; letter < letters.size(); ++letter) {
    const auto& segs = letters[letter];
    std::vector<double> cumulative;
    double total = 0.0;
    for (const auto& s : segs) cumulative.push_back(total += seg_length(s));
    for (std::size_t p = 0; p < points_per_letter; ++p, ++row) {
      const double pos = rng.uniform() * total;
      const auto k = static_cast<std::size_t>(
          std::min<std::ptrdiff_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pos) - cumulative.begin(),
                                   static_cast<std::ptrdiff_t>(segs.size() - 1)));
      const double start = k == 0 ? 0.0 : cumulative[k - 1];
      const double t = std::clamp((pos - start) / seg_length(segs[k]), 0.0, 1.0);
      double x = segs[k].a[0] + t * (segs[k].b[0] - segs[k].a[0]);
      double y = segs[k].a[1] + t * (segs[k].b[1] - segs[k].a[1]);
      if (noise_sigma > 0.0) {
        x += noise_sigma * rng.normal();
        y += noise_sigma * rng.normal();
      }
      data(row, 0) = static_cast<float>(x);
      data(row, 1) = static_cast<float>(y);
      labels[row] = static_cast<std::int32_t>(letter);
      ids[row] = "t" + std::to_string(row);
    }
  }
  FeatureMatrix f{std::move(data), std::move(ids), std::move(labels)};
  return f;
}

// ---------------------------------------------------------------------------
// ORL

namespace {

class PgmTokens {
 public:
  PgmTokens(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) : b_(bytes), path_(path) {}

  std::uint32_t number() {
    skip_space();
    std::uint64_t v = 0;
    std::size_t digits = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_++] - '0');
      if (++digits > 9) break;
    }
    if (digits == 0 || digits > 9) fail(ErrorKind::Data, "malformed PGM header in " + path_.string());
    return static_cast<std::uint32_t>(v);
  }
  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }
  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 2;
};

// Numeric-aware ordering so s2 sorts before s10.
bool natural_less(const std::string& a, const std::string& b) {
  auto split = [](const std::string& s) {
    std::size_t i = 0;
    while (i < s.size() && !std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    const std::string prefix = s.substr(0, i);
    long long num = -1;
    if (i < s.size()) num = std::atoll(s.c_str() + i);
    return std::pair{prefix, num};
  };
  const auto pa = split(a), pb = split(b);
  return pa != pb ? pa < pb : a < b;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error&) {
    fail(ErrorKind::Data, "missing image " + path.string());
  }
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2')) {
    fail(ErrorKind::Data, "not a PGM (P2/P5) image: " + path.string());
  }
  const bool binary = bytes[1] == '5';
  PgmTokens tok(bytes, path);
  GrayImage img;
  img.width = tok.number();
  img.height = tok.number();
  img.maxval = tok.number();
  if (img.maxval == 0 || img.maxval > 65535) fail(ErrorKind::Data, "bad PGM maxval in " + path.string());
  const std::size_t count = img.width * img.height;
  img.pixels.resize(count);
  if (binary) {
    tok.advance();  // single whitespace after maxval
    const std::size_t bpp = img.maxval < 256 ? 1 : 2;
    if (bytes.size() < tok.pos() + count * bpp) fail(ErrorKind::Data, "truncated PGM pixel data in " + path.string());
    const auto* p = bytes.data() + tok.pos();
    for (std::size_t i = 0; i < count; ++i) {
      img.pixels[i] = bpp == 1 ? p[i] : static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) img.pixels[i] = static_cast<std::uint16_t>(tok.number());
  }
  return img;
}

FeatureMatrix load_orl(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail(ErrorKind::Data, "ORL directory not found: " + dir.string());
  std::vector<std::string> subjects;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) subjects.push_back(entry.path().filename().string());
  }
  std::sort(subjects.begin(), subjects.end(), natural_less);
  if (subjects.size() != kOrlSubjects) {
    fail(ErrorKind::Data, "expected " + std::to_string(kOrlSubjects) + " subject folders in " + dir.string() +
                              ", found " + std::to_string(subjects.size()));
  }
  const std::size_t d = kOrlWidth * kOrlHeight;
  FeatureMatrix f;
  f.data = DenseMatrix(kOrlSubjects * kOrlImagesPerSubject, d);
  f.labels.emplace();
  std::size_t row = 0;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    for (std::size_t i = 1; i <= kOrlImagesPerSubject; ++i, ++row) {
      const auto path = dir / subjects[s] / (std::to_string(i) + ".pgm");
      const auto img = read_pgm(path);
      if (img.width != kOrlWidth || img.height != kOrlHeight) {
        fail(ErrorKind::Data, "image " + path.string() + " is " + std::to_string(img.width) + "x" +
                                  std::to_string(img.height) + ", expected 92x112");
      }
      double norm2 = 0.0;
      auto out = f.data.row(row);
      for (std::size_t p = 0; p < d; ++p) {
        const double v = static_cast<double>(img.pixels[p]) / img.maxval;
        norm2 += v * v;
        out[p] = static_cast<float>(v);
      }
      const double scale = 1.0 / std::max(std::sqrt(norm2), kNormEps);
      for (auto& v : out) v = static_cast<float>(v * scale);
      f.ids.push_back(subjects[s] + "/" + std::to_string(i));
      f.labels->push_back(static_cast<std::int32_t>(s));
    }
  }
  return f;
}

}  // namespace gradnet

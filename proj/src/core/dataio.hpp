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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kernels.hpp"

namespace gradnet {

/// N x d feature store with per-row ids and optional integer class labels.
struct FeatureMatrix {
  DenseMatrix data;
  std::vector<std::string> ids;
  std::optional<std::vector<std::int32_t>> labels;

  std::size_t n() const noexcept { return data.rows(); }
  std::size_t d() const noexcept { return data.cols(); }

  // Ids "0".."n-1" when none are given.
  static FeatureMatrix from_matrix(DenseMatrix data, std::optional<std::vector<std::int32_t>> labels = {});

  // Throws Data on duplicate ids, label length mismatch or non-finite values.
  void validate() const;

  FeatureMatrix subset(std::span<const std::size_t> rows) const;

  bool operator==(const FeatureMatrix&) const = default;
};

/// Query rows inside a FeatureMatrix.
struct QuerySet {
  std::vector<std::size_t> indices;
};

// --- .fmat -----------------------------------------------------------------
// "FMAT" | u32 version=1 | u64 n | u64 d | u8 has_labels | n*d f32 |
// [n i32 labels] | n * (u32 byte length, UTF-8 bytes) ids. Little-endian.
inline constexpr std::uint32_t kFmatVersion = 1;
inline constexpr std::size_t kFmatHeaderBytes = 4 + 4 + 8 + 8 + 1;

std::vector<std::uint8_t> encode_fmat(const FeatureMatrix& f);
FeatureMatrix decode_fmat(std::span<const std::uint8_t> bytes);
void write_fmat(const FeatureMatrix& f, const std::filesystem::path& path);
FeatureMatrix read_fmat(const std::filesystem::path& path);

// --- .csrg -----------------------------------------------------------------
// "CSRG" | u32 version=1 | u64 rows | u64 cols | u64 nnz | (rows+1) u64 row
// pointers | nnz u64 column indices | nnz f32 values | u64 meta length |
// meta bytes (UTF-8 key=value lines).
inline constexpr std::uint32_t kCsrgVersion = 1;

struct SparseFile {
  SparseMatrix matrix;
  std::string meta;
};

std::vector<std::uint8_t> encode_csrg(const SparseMatrix& m, const std::string& meta = {});
SparseFile decode_csrg(std::span<const std::uint8_t> bytes);
void write_csrg(const SparseMatrix& m, const std::filesystem::path& path, const std::string& meta = {});
SparseFile read_csrg(const std::filesystem::path& path);

// --- .ckpt -----------------------------------------------------------------
// "GDNC" | u32 version=1 | u32 L | (L+1) u64 dims | per layer: W1 f32, W2 f32 |
// u64 config length | config bytes | u64 feature hash | u8 has_state |
// [u64 timestep | u64 epoch | 4 u64 rng | per layer: m1 v1 m2 v2 f32].
inline constexpr std::uint32_t kCkptVersion = 1;

struct OptimizerSnapshot {
  std::uint64_t timestep = 0;
  std::uint64_t epoch = 0;
  std::array<std::uint64_t, 4> rng_state{};
  // Per layer: first/second moments of W1 then W2.
  std::vector<DenseMatrix> m1, v1, m2, v2;
  bool operator==(const OptimizerSnapshot&) const = default;
};

struct CheckpointData {
  std::vector<std::size_t> dims;
  std::vector<DenseMatrix> w1, w2;
  std::string config;
  std::uint64_t feature_hash = 0;
  std::optional<OptimizerSnapshot> state;
  bool operator==(const CheckpointData&) const = default;
};

std::vector<std::uint8_t> encode_ckpt(const CheckpointData& c);
CheckpointData decode_ckpt(std::span<const std::uint8_t> bytes);
void write_ckpt(const CheckpointData& c, const std::filesystem::path& path);
CheckpointData read_ckpt(const std::filesystem::path& path);

// --- misc ------------------------------------------------------------------
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// FNV-1a 64 of a byte string / file contents.
std::uint64_t content_hash(std::span<const std::uint8_t> bytes);
std::uint64_t file_content_hash(const std::filesystem::path& path);

// --- datasets --------------------------------------------------------------

struct Segment {
  std::array<double, 2> a;
  std::array<double, 2> b;
};

// Stroke skeletons of the letters P, A, M, I (in that order), already placed
// side by side in word coordinates.
const std::array<std::vector<Segment>, 4>& toy_letter_strokes();

// Points sampled uniformly by arc length along each letter's strokes plus
// isotropic Gaussian jitter. Rows are grouped by letter; labels 0..3.
FeatureMatrix generate_toy(std::size_t points_per_letter, double noise_sigma, std::uint64_t seed);

inline constexpr std::size_t kOrlSubjects = 40;
inline constexpr std::size_t kOrlImagesPerSubject = 10;
inline constexpr std::size_t kOrlWidth = 92;
inline constexpr std::size_t kOrlHeight = 112;

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint32_t maxval = 255;
  std::vector<std::uint16_t> pixels;
};

GrayImage read_pgm(const std::filesystem::path& path);

// Reads <dir>/s1..s40/1.pgm..10.pgm; each row is pixels/maxval, l2-normalized.
FeatureMatrix load_orl(const std::filesystem::path& dir);

}  // namespace gradnet

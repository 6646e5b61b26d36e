#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "trajloom/optim.hpp"
#include "trajloom/trajfield.hpp"

namespace trajloom {

enum class CoordConvention : std::uint32_t { absolute_pixel = 0, absolute_normalized = 1, offset = 2 };

// Trajectory file: little-endian, magic "TRJF", u32 version, u32 header
// (T, H_c, W_c, H, W, s, convention), f32 coords [T x H_c x W_c x 2], then u8
// visibility [T x H_c x W_c]. A dense per-pixel field has H_c = H, W_c = W
// and s is the cell size it is piecewise constant over.
struct TlfFile {
  static constexpr std::uint32_t kVersion = 1;

  int height = 0;
  int width = 0;
  int stride = 1;
  CoordConvention convention = CoordConvention::absolute_pixel;
  GridSeries<float> data;

  bool dense() const { return data.rows == height && data.cols == width; }
  void validate() const;
};

std::vector<char> encode_tlf(const TlfFile& file);
TlfFile decode_tlf(const std::vector<char>& bytes);
void write_tlf(const std::filesystem::path& path, const TlfFile& file);
TlfFile read_tlf(const std::filesystem::path& path);

TlfFile tlf_from_tracks(const SparseTracks<double>& tracks);
TlfFile tlf_from_dense(const DenseField<float>& field);
TlfFile tlf_from_offsets(const OffsetField<float>& field);
SparseTracks<double> tracks_from_tlf(const TlfFile& file);

// Parameter checkpoint: magic "TRJP", u32 version, string metadata, then
// named f64 blocks in parameter order.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> meta;
  ParamSet params;
};

std::vector<char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<char>& bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::vector<char> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<char>& bytes);

// Shortest round-tripping decimal form.
std::string format_number(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace trajloom

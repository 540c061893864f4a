#pragma once

// Binary model checkpoint. Layout (all integers and floats little-endian):
//
//   "CEQACKPT"                       8-byte magic
//   u32 version                      currently 1
//   u64 dim, u64 num_vertices, u64 num_relations
//   u32 tag length, tag bytes        backbone tag ("gqe")
//   u8 ablation, u8 softmax_scores, u8 memory_on_anchors
//   u32 block count, then per block:
//     u32 name length, name bytes, u64 rows, u64 cols,
//     rows*cols f64 in column-major order

#include <filesystem>
#include <string>

#include "ceqa/neural_meqe.hpp"

namespace ceqa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nn::ModelParams<double> params;
  nn::EncoderOptions options;
  std::string backbone = "gqe";
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ceqa

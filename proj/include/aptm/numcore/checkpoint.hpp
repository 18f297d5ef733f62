#pragma once
#include <string>
#include <utility>
#include <vector>

#include "aptm/numcore/tensor.hpp"

namespace aptm::numcore {

// Checkpoint container. Layout, little-endian throughout:
//   magic "APTM" | u32 version | u32 entry count
//   per entry: u16 name length | name bytes | u8 dtype (0 = f32) |
//              u8 rank | u32 extent per axis | raw f32 payload
struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Entries are written sorted by name so identical contents produce
// byte-identical files.
void save_checkpoint(const std::string& path, std::vector<CheckpointEntry> entries);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

}  // namespace aptm::numcore

#pragma once

#include <string>
#include <vector>

#include "nr/dataset.hpp"
#include "nr/network.hpp"

namespace nr {

// Binary PGM (P5, maxval 255).
void write_pgm(const std::string& path, int width, int height, const std::vector<std::uint8_t>& pixels);

// Exports one grayscale PGM per filter of `layer_index` for each of the
// given input samples, min-max normalized per map. Filenames encode the
// rank position: map<input>_rank<r>_unit<u>.pgm. Returns the written paths.
std::vector<std::string> export_feature_maps(const NetworkF& net, const DataSource& data,
                                             const std::vector<std::int64_t>& sample_indices, int layer_index,
                                             const std::vector<int>& ranking, const std::string& out_dir);

}  // namespace nr

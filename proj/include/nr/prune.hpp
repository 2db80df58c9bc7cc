#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nr/network.hpp"

namespace nr {

// What to keep, per maskable layer: the top keep_count units of the given
// ordering. Kept units preserve their relative index order so the sliced
// network reproduces the masked forward bit for bit.
struct PruneSpec {
    std::map<int, int> keep_counts;                  // layer index -> units kept
    std::map<int, std::vector<int>> rankings;        // layer index -> descending ordering
    std::string ranking_method;                      // tag carried into reports
};

// Slices kept units' parameters out of the network: filters/features at the
// pruned layer, matching input channels/features of the next linear layer
// (through flatten, kept conv channels map to kept blocks of features).
NetworkF prune(const NetworkF& net, const PruneSpec& spec);

// Kept unit indices (sorted ascending) implied by a spec for one layer.
std::vector<int> kept_units(const PruneSpec& spec, int layer_index, int width);

// Sum of weight and bias element counts over all layers.
std::int64_t count_params(const NetworkF& net);

// One multiply-accumulate = 2 FLOPs; conv = 2*out_positions*out_ch*in_ch*k^2,
// dense = 2*in*out, pool/activation = 1 FLOP per output element.
std::int64_t count_flops(const NetworkF& net);

extern const char* kParamConvention;
extern const char* kFlopConvention;

struct CompressionReport {
    std::string architecture;
    std::int64_t param_count = 0;
    std::int64_t flop_count = 0;
    std::string param_convention;
    std::string flop_convention;
    double test_error_before = -1.0;  // fraction; negative = not measured
    double test_error_after = -1.0;
    int retrain_epochs = 0;
    std::string ranking_method;
};

std::string compression_report_markdown(const CompressionReport& r);

}  // namespace nr

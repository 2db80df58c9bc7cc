#pragma once

#include <array>
#include <cstdint>

#include "nr/dataset.hpp"
#include "nr/network.hpp"

namespace nr {

// conv(1->w0,5x5) - maxpool2 - relu - conv(w0->w1,5x5) - maxpool2 - relu -
// flatten - dense(w2) - relu - dense(w3) - relu - dense(10), for 28x28
// grayscale inputs. Maskable layers: both convs and both hidden denses.
NetworkF build_lenet(const std::array<int, 4>& widths, std::uint64_t seed);

// Parses "10-20-100-25" into widths.
std::array<int, 4> parse_arch(const std::string& arch);

// Friendly names for the four maskable layers: conv1, conv2, fc1, fc2.
// Accepts either a name or a numeric layer index; returns the layer index.
int resolve_layer(const NetworkF& net, const std::string& name_or_index);
std::string maskable_layer_name(const NetworkF& net, int layer_index);

// Kaiming-normal init for any network built by hand.
template <typename T>
void init_params(Network<T>& net, std::uint64_t seed);

// Two-class MLP with `hidden` units where only units 0 and 1 carry label
// signal; the rest see label-independent noise directions with small head
// weights. Used to test that rankings recover planted structure.
struct PlantedTask {
    NetworkF net;                  // dense(input->hidden) - relu - dense(hidden->2)
    int hidden_layer_index = 0;    // the maskable hidden dense layer
    std::vector<int> informative;  // planted unit indices {0, 1}
};
PlantedTask make_planted_mlp(int input_dim, int hidden, std::uint64_t seed);
// x ~ U[-1,1]^d, label = [x0 + x1 > 0]
TensorSource make_planted_data(int n, int input_dim, std::uint64_t seed);

// Procedural 10-class glyph dataset in MNIST geometry (28x28 uint8), with
// per-sample jitter and pixel noise. Lets the whole pipeline run end to end
// without external files.
Dataset make_synthetic_digits(std::int64_t count, std::uint64_t seed, const std::string& name = "synth");

}  // namespace nr

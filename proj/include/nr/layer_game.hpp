#pragma once

#include <memory>

#include "nr/coalition.hpp"
#include "nr/dataset.hpp"
#include "nr/network.hpp"

namespace nr {

// Accuracy characteristic function: units of `layer_index` outside the
// coalition are masked, everything else runs unchanged.
double accuracy_payoff(const NetworkF& net, int layer_index, const Coalition& coalition, const DataSource& eval_data);

// Game whose payoff goes through the full masked forward pass. Reference
// path; used by tests and as the fallback for arbitrary architectures.
CoalitionGame make_naive_layer_game(const NetworkF& net, int layer_index, const DataSource& eval_data);

// Same characteristic function, restructured for speed: masking a unit only
// changes the network downstream of it, and the next linear layer is linear
// in its input, so each unit's contribution to that layer's pre-activation
// can be precomputed per image. A coalition's payoff then costs one small
// sum plus the tail of the network, and power-set enumeration walks a Gray
// code so consecutive coalitions differ by one unit.
class LayerGameEvaluator {
  public:
    LayerGameEvaluator(const NetworkF& net, int layer_index, const DataSource& eval_data, int batch_size = 512);

    int n_units() const { return n_units_; }
    std::int64_t data_size() const { return n_imgs_; }

    double payoff(const Coalition& coalition) const;
    // out[mask] for every mask in [0, 2^n_units); n_units <= 25
    void payoff_all(std::vector<double>& out) const;

  private:
    double accuracy_from_preact(const float* acc) const;           // arbitrary-coalition path
    void run_range(std::uint64_t t0, std::uint64_t t1, std::vector<double>& out) const;

    NetworkF tail_;                    // layers after the next linear layer (may be empty)
    std::vector<int> tail_in_shape_;   // per-sample shape of the next linear layer's output
    int next_dim_ = 0;
    int n_units_ = 0;
    std::int64_t n_imgs_ = 0;
    int n_classes_ = 0;
    std::vector<int> labels_;
    std::vector<float> base_;          // [next_dim], the next linear layer's bias expanded
    std::vector<float> unit_contrib_;  // [n_units][n_imgs * next_dim]
};

// Wires a LayerGameEvaluator into a CoalitionGame (payoff + bulk hooks).
CoalitionGame make_fast_layer_game(std::shared_ptr<LayerGameEvaluator> eval, int layer_index);

}  // namespace nr

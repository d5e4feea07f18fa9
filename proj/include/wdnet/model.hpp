#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wdnet/ops.hpp"
#include "wdnet/tensor.hpp"

namespace wdnet {

/// (1, 2, 3, 5, 8, ...) with d1 = 1, d2 = 2 and d_{k+2} = d_k + d_{k+1}.
std::vector<int> fibonacci_dilations(int count);
bool is_fibonacci_schedule(std::span<const int> rates);

struct WDNetConfig {
    int level = 2;
    int width = 64;
    int num_modules = 7;
    int dense_growth = 32;
    int dense_layers = 5;
    int dense_blocks = 2;
    double beta = 0.2;
    std::vector<int> dilation_rates = fibonacci_dilations(7);
    /// 1-based index of the module whose dense branch carries the attention module.
    int dpm_module_index = 4;
    int dpm_hidden = 32;
    /// 8 (axis + diagonal sweeps) or 4 (axis-only IRNN ablation).
    int dpm_directions = 8;
    /// Half-width of the uniform noise added around the identity taps.
    double init_noise = 0.01;

    /// 3·4^level subbands.
    int in_channels() const;
    void validate() const;

    /// Width 8, two modules, init noise 0.1; the configuration used for gradient checks.
    static WDNetConfig tiny();

    /// key=value lines, stable order; embedded in checkpoints.
    std::string to_text() const;
    static WDNetConfig from_text(std::string_view text);

    bool operator==(const WDNetConfig&) const = default;
};

template <typename T>
struct Conv {
    TensorT<T> weight;
    TensorT<T> bias;
    int dilation = 1;
    int padding = 0;

    TensorT<T> operator()(const TensorT<T>& x) const {
        return conv2d(x, weight, bias, {1, dilation, padding});
    }
};

/// Intermediate values of the direction perception module, for inspection.
template <typename T>
struct DpmTrace {
    TensorT<T> hidden;
    TensorT<T> stage1;
    TensorT<T> stage2;
    TensorT<T> attention;
};

/// Wavelet-domain dual-branch demoiréing network.
///
/// forward(x) = x + tail(M_K(...M_1(head(x)))), where each module M_k sums a
/// dense branch f + β·[A ⊙] B2(B1(f)) and a dilation branch
/// conv3(relu(conv3_dilated(f, d_k))). The attention map A comes from the
/// direction perception module of module `dpm_module_index` and is returned
/// alongside the restored subbands.
template <typename T>
class WDNetT {
   public:
    struct Output {
        TensorT<T> bands;
        TensorT<T> attention;
    };

    explicit WDNetT(WDNetConfig config, std::uint64_t seed = 0);

    Output forward(const TensorT<T>& x) const;

    /// `attention` receives the module's attention map when it has one.
    TensorT<T> dual_branch_module(const TensorT<T>& f, int k, TensorT<T>* attention = nullptr) const;
    /// `attention` may be undefined (no gating).
    TensorT<T> dense_branch(const TensorT<T>& f, int k, const TensorT<T>& attention) const;
    TensorT<T> dilation_branch(const TensorT<T>& f, int k) const;
    TensorT<T> dpm_forward(const TensorT<T>& f) const { return dpm_trace(f).attention; }
    DpmTrace<T> dpm_trace(const TensorT<T>& f) const;

    const WDNetConfig& config() const { return config_; }
    std::uint64_t seed() const { return seed_; }

    /// Registration order is stable and defines the checkpoint entry order.
    std::vector<std::pair<std::string, TensorT<T>>>& parameters() { return params_; }
    const std::vector<std::pair<std::string, TensorT<T>>>& parameters() const { return params_; }
    TensorT<T>& parameter(std::string_view name);
    std::size_t parameter_count() const;
    void zero_grad();

    /// Same architecture and parameter values at another precision.
    template <typename U>
    WDNetT<U> cast() const {
        WDNetT<U> out(config_, seed_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto src = params_[i].second.data();
            auto dst = out.parameters()[i].second.mutable_data();
            for (std::size_t q = 0; q < src.size(); ++q) dst[q] = static_cast<U>(src[q]);
        }
        return out;
    }

   private:
    struct DenseBlock {
        std::vector<Conv<T>> layers;
        Conv<T> fuse;
    };
    struct DpmStage {
        Conv<T> maps;
        std::vector<TensorT<T>> recurrent;
        Conv<T> fuse;
    };
    struct Dpm {
        Conv<T> in;
        DpmStage stages[2];
        Conv<T> out;
    };
    struct Module {
        std::vector<DenseBlock> blocks;
        Conv<T> dilated;
        Conv<T> conv;
        bool has_dpm = false;
        Dpm dpm;
    };

    Conv<T> make_conv(const std::string& name, int in, int out, int k, int dilation);
    TensorT<T> dense_block(const DenseBlock& block, const TensorT<T>& x) const;
    TensorT<T> dpm_stage(const DpmStage& stage, const TensorT<T>& x) const;
    const Module& module(int k) const;

    WDNetConfig config_;
    std::uint64_t seed_;
    Conv<T> head_;
    std::vector<Module> modules_;
    Conv<T> tail_;
    std::vector<std::pair<std::string, TensorT<T>>> params_;
};

using WDNet = WDNetT<float>;
using WDNet64 = WDNetT<double>;

}  // namespace wdnet

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "wdnet/datagen.hpp"
#include "wdnet/losses.hpp"
#include "wdnet/metrics.hpp"
#include "wdnet/model.hpp"

namespace wdnet {

struct TrainConfig {
    double learning_rate = 2e-4;
    double lr_decay = 0.1;
    /// Epochs between decays; 0 disables the schedule.
    int lr_decay_epochs = 20;
    int batch_size = 4;
    int epochs = 1;
    /// Optional cap on optimizer steps across all epochs; -1 means no cap.
    long steps = -1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    /// Perceptual term off: no pretrained feature extractor ships with the toolkit.
    LossWeights weights = LossWeights::desk();
    /// Extractor weights for the perceptual term (see load_feature_extractor);
    /// empty selects a fixed random conv stack seeded by perceptual_seed.
    std::string perceptual_weights;
    std::uint64_t perceptual_seed = 7;
    /// Write a checkpoint every N steps; 0 writes only the final one.
    int checkpoint_every = 0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// base · decay^floor(epoch / decay_epochs)
double lr_at(int epoch, const TrainConfig& cfg);

struct AdamState {
    std::uint64_t t = 0;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
};

/// One Adam update of `params` from their current gradients.
void adam_update(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, double lr,
                 const TrainConfig& cfg);

struct TrainState {
    AdamState adam;
    std::uint64_t epoch = 0;
    std::uint64_t step = 0;
    /// Text form of the shuffling engine.
    std::string rng;
};

/// Batch tensors prepared from moiré pairs.
struct Batch {
    Tensor contaminated;  // B×3×H×W in [0,1]
    Tensor clean;
    Tensor mask;          // B×1×H×W in {0,1}
};

Batch make_batch(const std::vector<const MoirePair*>& pairs, int level);

/// Loss terms for one batch, graph attached to the model parameters.
LossParts<float> compute_loss_parts(const WDNet& model, const Batch& batch, const LossWeights& weights,
                                    const FeatureExtractor<float>& extractor);

class Trainer {
   public:
    Trainer(WDNet& model, TrainConfig cfg);

    /// Forward, backward and one Adam step. Throws if any loss term is not finite.
    LossBreakdown train_step(const std::vector<const MoirePair*>& batch);
    /// Loss of a batch without touching parameters or optimizer state.
    LossBreakdown evaluate_loss(const std::vector<const MoirePair*>& batch) const;

    using StepCallback = std::function<void(std::uint64_t step, std::uint64_t epoch, const LossBreakdown&)>;
    /// Epoch loop over a fixed dataset, reshuffled each epoch. Stops after
    /// cfg.epochs or cfg.steps, whichever comes first. A trainer whose state
    /// was restored from a checkpoint continues exactly where the saved run
    /// stopped, mid-epoch included, given the same data and batch size.
    void fit(const std::vector<MoirePair>& data, const StepCallback& on_step = {});

    double current_lr() const { return lr_at(static_cast<int>(state_.epoch), cfg_); }
    const TrainConfig& config() const { return cfg_; }
    TrainState& state() { return state_; }
    const TrainState& state() const { return state_; }
    WDNet& model() { return model_; }

   private:
    WDNet& model_;
    TrainConfig cfg_;
    TrainState state_;
    std::mt19937_64 rng_;
    FeatureExtractor<float> extractor_;
};

// Checkpoint file: "WDNT", u32 version, u32 entry count, then entries of
// (u16 name length, name, u8 dtype, u8 rank, u32 dims[rank], raw data),
// all little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> values;
    bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
    WDNetConfig config;
    std::string band_layout;
    std::vector<NamedArray> parameters;
    TrainState state;

    static Checkpoint capture(const WDNet& model, const TrainState& state);
    /// Model with the stored configuration and parameter values.
    WDNet build_model() const;
    /// Copies parameters into an existing model of the same configuration.
    void restore_into(WDNet& model) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
/// `expected`, when given, must equal the stored configuration.
Checkpoint load_checkpoint(const std::filesystem::path& path, const WDNetConfig* expected = nullptr);

/// Float arrays in the checkpoint container, without model semantics.
void save_arrays(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_arrays(const std::filesystem::path& path);

/// Conv + relu stack from an array file holding, in order, pairs of
/// <layer>.weight (out×in×k×k, odd k) and <layer>.bias (out). The first layer
/// takes 3 channels.
FeatureExtractor<float> load_feature_extractor(const std::filesystem::path& path);

/// Restores one image; width and height must be divisible by 2^level.
Image8 infer(const WDNet& model, const Image8& image);

struct EvalRow {
    std::string name;
    QualityScore restored;
    QualityScore baseline;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    QualityScore mean_restored;
    QualityScore mean_baseline;

    std::string table() const;
};

EvalReport evaluate(const WDNet& model, const std::vector<MoirePair>& pairs);

}  // namespace wdnet

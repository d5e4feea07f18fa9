#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wdnet/image.hpp"
#include "wdnet/losses.hpp"

namespace wdnet {

struct MoirePair {
    Image8 contaminated;
    Image8 clean;
    MoireMask mask;
    std::uint64_t seed = 0;
    /// File stem when loaded from disk, zero-padded index when synthesised.
    std::string name;
};

enum class PatternKind { linear, radial, curved };
enum class BaseKind { gradient, checkerboard, stripes, blobs };

std::string_view name_of(PatternKind k);
std::string_view name_of(BaseKind k);
BaseKind parse_base_kind(std::string_view s);

struct SynthConfig {
    int width = 128;
    int height = 128;
    /// Relative weights of the three interference geometries.
    double weight_linear = 1.0;
    double weight_radial = 1.0;
    double weight_curved = 1.0;
    /// Carrier frequency range, cycles per image width.
    double freq_min = 16.0;
    double freq_max = 48.0;
    /// Peak moiré amplitude range in 8-bit units.
    double amp_min = 32.0;
    double amp_max = 64.0;
    /// Each grating is (offset + cos)/(1 + offset). 0 gives the bare product
    /// of cosines; 1 models non-negative transmittance gratings.
    double grating_offset = 1.0;
    /// Per-channel phase offsets are drawn from [-phase_jitter, phase_jitter] radians.
    double phase_jitter = 0.8;
    std::vector<BaseKind> bases = {BaseKind::gradient, BaseKind::checkerboard, BaseKind::stripes,
                                   BaseKind::blobs};
    int mask_threshold = 15;

    void validate() const;
    bool operator==(const SynthConfig&) const = default;
};

/// Independent seed for item `index` of a stream seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// cos(2π f1 x/n)·cos(2π f2 x/n) for x = 0..n-1; the 1D interference model.
std::vector<double> grating_product(int n, double f1, double f2);

MoirePair synth_pair(const SynthConfig& cfg, std::uint64_t seed);
/// Pair i uses derive_seed(seed, i); generated in parallel, identical to serial.
std::vector<MoirePair> synth_dataset(const SynthConfig& cfg, int count, std::uint64_t seed);

struct LoadOptions {
    enum class Fit { none, center_crop, resize };
    int mask_threshold = 15;
    Fit fit = Fit::none;
    int width = 256;
    int height = 256;
};

/// Pairs matched by file name, in sorted name order. A file present in one
/// directory but not the other is an error.
std::vector<MoirePair> load_pairs(const std::filesystem::path& dir_moire,
                                  const std::filesystem::path& dir_clean, const LoadOptions& opt = {});
/// Reads a directory laid out by write_pairs.
std::vector<MoirePair> load_dataset(const std::filesystem::path& root, const LoadOptions& opt = {});

/// Writes root/moire/<name>.png, root/clean/<name>.png and root/mask/<name>.png.
void write_pairs(const std::filesystem::path& root, const std::vector<MoirePair>& pairs);

Image8 mask_image(const MoireMask& mask);

}  // namespace wdnet

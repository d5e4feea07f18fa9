#pragma once

#include <string>
#include <vector>

#include "wdnet/image.hpp"

namespace wdnet {

/// Peak signal-to-noise ratio in dB over all pixels and channels;
/// +infinity for identical images.
double psnr(const Image8& a, const Image8& b);

/// Mean structural similarity of the luma channels: 11×11 Gaussian window
/// (σ = 1.5), K1 = 0.01, K2 = 0.03, L = 255, population statistics, valid
/// window positions only.
double ssim(const Image8& a, const Image8& b);

/// Same statistic on two luma planes in 8-bit units.
double ssim_gray(const std::vector<double>& a, const std::vector<double>& b, int width, int height);

struct QualityScore {
    double psnr_db = 0;
    double ssim = 0;
};

QualityScore quality(const Image8& a, const Image8& b);

/// "inf" for the identical-image sentinel, otherwise fixed two decimals.
std::string format_psnr(double db);

struct MetricsRow {
    std::string name;
    QualityScore score;
};

/// filename / PSNR / SSIM table with a trailing mean row.
std::string metrics_table(const std::vector<MetricsRow>& rows);
QualityScore mean_score(const std::vector<QualityScore>& scores);

}  // namespace wdnet

#include "nesy/core.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>

namespace nesy {

namespace {
constexpr std::array<std::string_view, kNumClasses> kClassNames{
    "VeryLow", "Low", "Moderate", "High", "VeryHigh"};
}

OccupancyClass class_from_index(int i) {
    if (i < 0 || i >= static_cast<int>(kNumClasses)) {
        throw domain_error("class index out of range: " + std::to_string(i));
    }
    return static_cast<OccupancyClass>(i);
}

std::string_view class_name(OccupancyClass c) noexcept { return kClassNames[index_of(c)]; }

std::optional<OccupancyClass> class_from_name(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (kClassNames[i] == name) return static_cast<OccupancyClass>(i);
    }
    return std::nullopt;
}

std::string_view error_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Config: return "config_error";
        case ErrorKind::Data: return "data_error";
        case ErrorKind::Integrity: return "integrity_error";
        case ErrorKind::Dimension: return "dimension_error";
        case ErrorKind::Domain: return "domain_error";
    }
    return "error";
}

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Config: return 2;
        case ErrorKind::Data:
        case ErrorKind::Domain:
        case ErrorKind::Dimension: return 3;
        case ErrorKind::Integrity: return 4;
    }
    return 1;
}

ClassDistribution ClassDistribution::uniform() noexcept {
    ClassDistribution d;
    d.probs.fill(1.0 / kNumClasses);
    return d;
}

OccupancyClass ClassDistribution::argmax() const noexcept {
    std::size_t best = 0;
    for (std::size_t i = 1; i < kNumClasses; ++i) {
        if (probs[i] > probs[best]) best = i;
    }
    return static_cast<OccupancyClass>(best);
}

double ClassDistribution::max() const noexcept { return probs[index_of(argmax())]; }

double ClassDistribution::sum() const noexcept {
    return std::accumulate(probs.begin(), probs.end(), 0.0);
}

bool ClassDistribution::is_valid(double tol) const noexcept {
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) return false;
    }
    return std::abs(sum() - 1.0) <= tol;
}

ClassDistribution normalized(const std::array<double, kNumClasses>& weights) {
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw domain_error("distribution weight must be finite and nonnegative");
        total += w;
    }
    if (!(total > 0.0)) throw domain_error("distribution has zero mass");
    ClassDistribution d;
    for (std::size_t i = 0; i < kNumClasses; ++i) d.probs[i] = weights[i] / total;
    return d;
}

std::string fnv1a64_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
        h >>= 4;
    }
    return out;
}

}  // namespace nesy

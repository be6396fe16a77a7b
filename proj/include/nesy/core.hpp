#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace nesy {

inline constexpr std::size_t kNumClasses = 5;
inline constexpr std::size_t kNumWindows = 3;

// Ordinal occupancy level; each class covers a 20% band of the occupancy ratio.
enum class OccupancyClass : int { VeryLow = 0, Low = 1, Moderate = 2, High = 3, VeryHigh = 4 };

constexpr int index_of(OccupancyClass c) noexcept { return static_cast<int>(c); }
OccupancyClass class_from_index(int i);
std::string_view class_name(OccupancyClass c) noexcept;
std::optional<OccupancyClass> class_from_name(std::string_view name) noexcept;

/// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind { Config, Data, Integrity, Dimension, Domain };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error config_error(const std::string& m) { return {ErrorKind::Config, m}; }
inline Error data_error(const std::string& m) { return {ErrorKind::Data, m}; }
inline Error integrity_error(const std::string& m) { return {ErrorKind::Integrity, m}; }
inline Error dimension_error(const std::string& m) { return {ErrorKind::Dimension, m}; }
inline Error domain_error(const std::string& m) { return {ErrorKind::Domain, m}; }

std::string_view error_code(ErrorKind kind) noexcept;
int exit_code(ErrorKind kind) noexcept;

/// Probability vector over the five occupancy classes.
struct ClassDistribution {
    std::array<double, kNumClasses> probs{};

    static ClassDistribution uniform() noexcept;

    double operator[](std::size_t i) const noexcept { return probs[i]; }
    double& operator[](std::size_t i) noexcept { return probs[i]; }

    // Ties resolve to the lowest class index.
    OccupancyClass argmax() const noexcept;
    double max() const noexcept;
    double sum() const noexcept;

    /// True when every entry lies in [0,1] and the total is within `tol` of 1.
    bool is_valid(double tol = 1e-9) const noexcept;

    bool operator==(const ClassDistribution&) const = default;
};

/// Builds a distribution from raw nonnegative weights; throws if the mass is not positive.
ClassDistribution normalized(const std::array<double, kNumClasses>& weights);

/// 64-bit FNV-1a digest rendered as 16 lowercase hex digits.
std::string fnv1a64_hex(std::string_view bytes);

}  // namespace nesy

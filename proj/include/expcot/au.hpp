#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace expcot {

inline constexpr int kActionUnitCount = 24;

// One of the 24 FEAFA-scheme action units, index 1..24.
class ActionUnitId {
public:
    explicit ActionUnitId(int index);

    int index() const { return index_; }

private:
    int index_;
};

// Total index -> name mapping for the 24 AUs. Always complete once
// constructed; a partial or malformed table fails at load time.
class AuNameTable {
public:
    // Built-in FEAFA-style table. Index 1 is "Left Eye Close"; the rest is
    // configuration, replaceable via load().
    static const AuNameTable& feafa_default();

    // Reads a UTF-8 file, one "<index>\t<name>" record per line,
    // indices 1..24, exactly 24 lines.
    static AuNameTable load(const std::filesystem::path& file);

    static AuNameTable from_names(std::array<std::string, kActionUnitCount> names);

    const std::string& name(ActionUnitId id) const;

    const std::array<std::string, kActionUnitCount>& names() const { return names_; }

private:
    AuNameTable() = default;
    void validate() const;

    std::array<std::string, kActionUnitCount> names_;
};

// 24 AU densities, position i holds AU index i+1, each in [0, 1].
class AuVector {
public:
    static AuVector zeros();
    // Validates length and range; reports the offending position on failure.
    static AuVector from_densities(const std::vector<double>& densities);

    double density(ActionUnitId id) const { return densities_[static_cast<std::size_t>(id.index() - 1)]; }
    const std::array<double, kActionUnitCount>& densities() const { return densities_; }

private:
    AuVector() : densities_{} {}

    std::array<double, kActionUnitCount> densities_;
};

// Positive/negative split of one AuVector, both halves sorted by AU index.
struct AuObservation {
    std::vector<std::pair<std::string, double>> positive; // density > 0
    std::vector<std::string> negative;                    // density == 0
};

std::string index_to_name(ActionUnitId id, const AuNameTable& table);

AuObservation partition(const AuVector& v, const AuNameTable& table);

// Fixed-point rendering with exactly 2 fractional digits,
// halfway cases rounded away from zero ("0.23", "0.00", "1.00").
std::string format_density(double d);

} // namespace expcot

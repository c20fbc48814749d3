#include "expcot/au.hpp"

#include "expcot/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>

namespace expcot {

ActionUnitId::ActionUnitId(int index) : index_(index) {
    if (index < 1 || index > kActionUnitCount) {
        throw Error("AU index out of range [1, 24]: " + std::to_string(index));
    }
}

namespace {

// Best-effort FEAFA/FEAFA+ nomenclature. Only index 1 is fixed by the
// scheme's published example; the remainder is shipped configuration and
// can be replaced with AuNameTable::load().
const std::array<std::string, kActionUnitCount> kDefaultAuNames = {
    "Left Eye Close",
    "Right Eye Close",
    "Left Lid Raiser",
    "Right Lid Raiser",
    "Left Brow Lowerer",
    "Right Brow Lowerer",
    "Left Brow Raiser",
    "Right Brow Raiser",
    "Left Cheek Raiser",
    "Right Cheek Raiser",
    "Nose Wrinkler",
    "Upper Lip Raiser",
    "Left Lip Corner Puller",
    "Right Lip Corner Puller",
    "Left Lip Corner Depressor",
    "Right Lip Corner Depressor",
    "Chin Raiser",
    "Lip Pucker",
    "Lip Stretcher",
    "Lip Funneler",
    "Lip Tightener",
    "Lip Pressor",
    "Lips Part",
    "Jaw Drop",
};

} // namespace

const AuNameTable& AuNameTable::feafa_default() {
    static const AuNameTable table = AuNameTable::from_names(kDefaultAuNames);
    return table;
}

AuNameTable AuNameTable::from_names(std::array<std::string, kActionUnitCount> names) {
    AuNameTable table;
    table.names_ = std::move(names);
    table.validate();
    return table;
}

AuNameTable AuNameTable::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open AU name table: " + file.string());
    }
    std::array<std::string, kActionUnitCount> names;
    std::array<bool, kActionUnitCount> seen{};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ConfigError(file.string() + ":" + std::to_string(line_no) +
                              ": expected <index>\\t<name>");
        }
        int index = 0;
        try {
            index = std::stoi(line.substr(0, tab));
        } catch (const std::exception&) {
            throw ConfigError(file.string() + ":" + std::to_string(line_no) + ": bad AU index");
        }
        if (index < 1 || index > kActionUnitCount) {
            throw ConfigError(file.string() + ":" + std::to_string(line_no) +
                              ": AU index out of range [1, 24]");
        }
        if (seen[static_cast<std::size_t>(index - 1)]) {
            throw ConfigError(file.string() + ":" + std::to_string(line_no) +
                              ": duplicate AU index " + std::to_string(index));
        }
        seen[static_cast<std::size_t>(index - 1)] = true;
        names[static_cast<std::size_t>(index - 1)] = line.substr(tab + 1);
    }
    for (int i = 0; i < kActionUnitCount; ++i) {
        if (!seen[static_cast<std::size_t>(i)]) {
            throw ConfigError(file.string() + ": missing entry for AU " + std::to_string(i + 1));
        }
    }
    return from_names(std::move(names));
}

void AuNameTable::validate() const {
    static const std::regex au_token(R"(AU\s*[0-9]+)");
    std::set<std::string> unique;
    for (int i = 0; i < kActionUnitCount; ++i) {
        const auto& name = names_[static_cast<std::size_t>(i)];
        if (name.empty()) {
            throw ConfigError("AU name table: empty name for AU " + std::to_string(i + 1));
        }
        if (std::regex_search(name, au_token)) {
            throw ConfigError("AU name table: name for AU " + std::to_string(i + 1) +
                              " contains an 'AU n' token: " + name);
        }
        if (!unique.insert(name).second) {
            throw ConfigError("AU name table: duplicate name: " + name);
        }
    }
}

const std::string& AuNameTable::name(ActionUnitId id) const {
    return names_[static_cast<std::size_t>(id.index() - 1)];
}

AuVector AuVector::zeros() {
    return AuVector{};
}

AuVector AuVector::from_densities(const std::vector<double>& densities) {
    if (densities.size() != kActionUnitCount) {
        throw Error("AU vector must have exactly 24 densities, got " +
                    std::to_string(densities.size()));
    }
    AuVector v;
    for (std::size_t i = 0; i < densities.size(); ++i) {
        const double d = densities[i];
        if (!(d >= 0.0 && d <= 1.0)) {
            throw Error("au[" + std::to_string(i) + "] density out of range [0, 1]: " +
                        std::to_string(d));
        }
        v.densities_[i] = d;
    }
    return v;
}

std::string index_to_name(ActionUnitId id, const AuNameTable& table) {
    return table.name(id);
}

AuObservation partition(const AuVector& v, const AuNameTable& table) {
    AuObservation obs;
    for (int i = 1; i <= kActionUnitCount; ++i) {
        const ActionUnitId id(i);
        const double d = v.density(id);
        if (d > 0.0) {
            obs.positive.emplace_back(table.name(id), d);
        } else {
            obs.negative.push_back(table.name(id));
        }
    }
    return obs;
}

std::string format_density(double d) {
    // Rounds the shortest round-trip decimal form of d, so a density written
    // as 0.145 renders as "0.15" even though the stored double sits a hair
    // below the tie. Multiplying by 100 instead would drift on such values.
    char shortest[64];
    const auto res = std::to_chars(shortest, shortest + sizeof(shortest), d,
                                   std::chars_format::fixed);
    std::string text(shortest, res.ptr);

    const auto dot = text.find('.');
    const std::string whole = dot == std::string::npos ? text : text.substr(0, dot);
    std::string frac = dot == std::string::npos ? "" : text.substr(dot + 1);
    frac.resize(std::max<std::size_t>(frac.size(), 2), '0');

    long long cents = std::stoll(whole) * 100 + (frac[0] - '0') * 10 + (frac[1] - '0');
    // Half-away-from-zero on the decimal digits: any tail at or above "5..."
    // bumps the cent (densities are non-negative).
    if (frac.size() > 2 && frac[2] >= '5') {
        cents += 1;
    }

    char buf[16];
    std::snprintf(buf, sizeof(buf), "%lld.%02lld", cents / 100, cents % 100);
    return buf;
}

} // namespace expcot

#pragma once

// Plain CSV writers with shortest round-trippable number formatting.

#include <charconv>
#include <cstdint>
#include <ostream>
#include <string>
#include <system_error>
#include <vector>

#include "integrator.hpp"

namespace selkov::csv {

inline std::string number(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    if (res.ec != std::errc{}) return "nan";
    return std::string(buf, res.ptr);
}

inline std::string number(long long x) { return std::to_string(x); }

struct SeriesRow {
    double x = 0.0;
    double value = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::string label;
};

inline void write_series(std::ostream& out, const std::vector<SeriesRow>& rows) {
    out << "x,value,ci_lo,ci_hi,label\n";
    for (const auto& r : rows)
        out << number(r.x) << ',' << number(r.value) << ',' << number(r.ci_lo) << ',' << number(r.ci_hi) << ',' << r.label
            << '\n';
}

/// One row per (saved time, site) with lattice index in the site column.
inline void write_trajectory(std::ostream& out, const TrajectoryRecord& rec, const TruncationConfig& trunc,
                             bool header = true) {
    if (header) out << "t,site,u,v,path_id\n";
    for (std::size_t j = 0; j < rec.states.size(); ++j) {
        const auto& s = rec.states[j];
        for (std::size_t k = 0; k < s.size(); ++k)
            out << number(rec.times[j]) << ',' << trunc.lattice_index(k) << ',' << number(s.u[k]) << ',' << number(s.v[k])
                << ',' << rec.path_id << '\n';
    }
}

}  // namespace selkov::csv

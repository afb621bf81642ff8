#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aquamon/dataset.hpp"

namespace aquamon::testing {

// The twelve rows of the published aquaponics snapshot (entry ids 1889..1902,
// 1899 and 1901 absent), re-delimited with commas.
inline constexpr const char* kSnapshotCsv =
    "created_at,entry_id,temperature,turbidity,dissolved_o2,ph,ammonia,nitrate,population,fish_length,fish_weight\n"
    "2021-06-19:00:00:05,1889,24.875,100,4.505,8.43365,0.45842,193,50,7.11,2.91\n"
    "2021-06-19:00:01:02,1890,24.9375,100,6.601,8.43818,0.45842,194,50,7.11,2.91\n"
    "2021-06-19:00:01:22,1891,24.875,100,15.797,8.42457,0.45842,192,50,7.11,2.91\n"
    "2021-06-19:00:01:44,1892,24.9375,100,5.046,8.43365,0.45842,193,50,7.11,2.91\n"
    "2021-06-19:00:02:07,1893,24.9375,100,38.407,8.40641,0.45842,192,50,7.11,2.91\n"
    "2021-06-19:00:02:27,1894,24.9375,100,3.862,8.42003,0.45842,193,50,7.11,2.91\n"
    "2021-06-19:00:02:47,1895,24.875,100,2.831,8.43818,0.45842,194,50,7.11,2.91\n"
    "2021-06-19:00:03:07,1896,24.9375,100,5.012,8.42911,0.45842,193,50,7.11,2.91\n"
    "2021-06-19:00:03:27,1897,24.9375,100,2.916,8.42911,0.45842,192,50,7.11,2.91\n"
    "2021-06-19:00:03:47,1898,24.875,100,17.005,8.43365,0.45842,192,50,7.11,2.91\n"
    "2021-06-19:00:04:31,1900,24.875,100,6.964,8.48358,0.45842,191,50,7.11,2.91\n"
    "2021-06-19:00:05:11,1902,24.9375,100,3.465,8.42911,0.45842,187,50,7.11,2.91\n";

inline RawDataset snapshot_dataset() {
    std::istringstream in(kSnapshotCsv);
    return load_dataset(in, "snapshot");
}

inline RegularSeries make_series(MetricKind m, std::vector<std::optional<double>> values,
                                 std::int64_t start = 0, std::int64_t step = 600) {
    RegularSeries s;
    s.metric = m;
    s.start = from_epoch(start);
    s.step = Seconds{step};
    s.counts.resize(values.size());
    s.high_spread.resize(values.size(), false);
    for (std::size_t i = 0; i < values.size(); ++i) s.counts[i] = values[i] ? 1 : 0;
    s.values = std::move(values);
    return s;
}

}  // namespace aquamon::testing

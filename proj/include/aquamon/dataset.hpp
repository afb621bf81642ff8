#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aquamon/metrics.hpp"
#include "aquamon/timestamp.hpp"

namespace aquamon {

// Sparse map MetricKind -> value with fixed storage.
class MetricValues {
public:
    void set(MetricKind m, double v) { slots_[metric_index(m)] = v; }
    void erase(MetricKind m) { slots_[metric_index(m)].reset(); }
    bool contains(MetricKind m) const { return slots_[metric_index(m)].has_value(); }
    std::optional<double> get(MetricKind m) const { return slots_[metric_index(m)]; }
    std::size_t count() const;
    bool empty() const { return count() == 0; }

    template <class F>
    void for_each(F&& f) const {
        for (auto m : kAllMetrics) {
            if (const auto& v = slots_[metric_index(m)]) f(m, *v);
        }
    }

    friend bool operator==(const MetricValues&, const MetricValues&) = default;

private:
    std::array<std::optional<double>, kMetricCount> slots_{};
};

struct SampleRecord {
    UtcSeconds timestamp{};
    std::optional<std::uint64_t> entry_id;
    MetricValues values;

    friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct RejectedRow {
    std::size_t line = 0;
    std::string reason;
};

struct RawDataset {
    std::vector<SampleRecord> records;  // ascending timestamp
    std::string source_name;
    std::vector<RejectedRow> rejected_rows;
    std::vector<std::string> warnings;
};

// Throws Errc::schema without a created_at column or without any metric column,
// Errc::empty_dataset when no data row survives.
RawDataset load_dataset(std::istream& in, std::string source_name = "stream");
RawDataset load_dataset_file(const std::string& path);

// Writes the canonical column order with dataset timestamps.
void write_dataset_csv(std::ostream& out, const std::vector<SampleRecord>& records);
void write_dataset_header(std::ostream& out);
void write_dataset_row(std::ostream& out, const SampleRecord& record);

struct RegularSeries {
    MetricKind metric{};
    UtcSeconds start{};
    Seconds step{600};
    std::vector<std::optional<double>> values;
    // Source records per bucket.
    std::vector<std::size_t> counts;
    // Buckets whose coefficient of variation exceeded the resample threshold.
    std::vector<bool> high_spread;

    std::size_t size() const { return values.size(); }
    UtcSeconds bucket_start(std::size_t i) const {
        return start + step * static_cast<std::int64_t>(i);
    }
    std::size_t missing_count() const;
};

struct ResampleOptions {
    Seconds step{600};
    // Flag buckets whose stddev/|mean| exceeds this value (needs >= 2 records).
    double spread_cv_threshold = 0.5;
};

// Mean-aggregates `metric` into buckets anchored at floor(first timestamp / step) * step.
// The grid spans the whole dataset so that resampling several metrics gives aligned series.
RegularSeries resample(const RawDataset& dataset, MetricKind metric, const ResampleOptions& opts = {});

// Linear interpolation across interior runs of at most `max_gap` missing buckets.
RegularSeries fill_gaps(const RegularSeries& series, std::size_t max_gap);

// Chronological split; train receives floor(n * train_fraction) buckets.
std::pair<RegularSeries, RegularSeries> split(const RegularSeries& series, double train_fraction);

// "bucket_start,value" with an empty value for missing buckets.
void write_series_csv(std::ostream& out, const RegularSeries& series);

}  // namespace aquamon

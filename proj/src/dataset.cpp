#include "aquamon/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "aquamon/error.hpp"

namespace aquamon {

std::size_t MetricValues::count() const {
    return static_cast<std::size_t>(
        std::count_if(slots_.begin(), slots_.end(), [](const auto& s) { return s.has_value(); }));
}

std::size_t RegularSeries::missing_count() const {
    return static_cast<std::size_t>(
        std::count_if(values.begin(), values.end(), [](const auto& v) { return !v.has_value(); }));
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        auto next = line.find(delim, pos);
        out.push_back(trim(line.substr(pos, next == std::string_view::npos ? next : next - pos)));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

std::optional<double> parse_real(std::string_view s) {
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<std::uint64_t> parse_entry_id(std::string_view s) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || v == 0) return std::nullopt;
    return v;
}

struct PendingRecord {
    SampleRecord record;
    std::size_t line;
};

}  // namespace

RawDataset load_dataset(std::istream& in, std::string source_name) {
    RawDataset ds;
    ds.source_name = std::move(source_name);

    std::string line;
    std::size_t line_no = 0;
    std::string header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            header = line;
            break;
        }
    }
    if (header.empty()) throw Error(Errc::empty_dataset, ds.source_name + ": empty input");

    const char delim = header.find(',') != std::string::npos ? ',' : '\t';
    const auto columns = split_fields(header, delim);

    std::optional<std::size_t> ts_col;
    std::optional<std::size_t> id_col;
    std::vector<std::pair<std::size_t, MetricKind>> metric_cols;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        const auto name = columns[i];
        if (name == "created_at") {
            ts_col = i;
        } else if (name == "entry_id") {
            id_col = i;
        } else if (auto m = metric_from_name(name)) {
            if (std::any_of(metric_cols.begin(), metric_cols.end(),
                            [&](const auto& c) { return c.second == *m; })) {
                throw Error(Errc::schema, ds.source_name + ": duplicate column '" + std::string(name) + "'");
            }
            metric_cols.emplace_back(i, *m);
        } else {
            ds.warnings.push_back("ignoring unknown column '" + std::string(name) + "'");
        }
    }
    if (!ts_col) throw Error(Errc::schema, ds.source_name + ": missing created_at column");
    if (metric_cols.empty()) throw Error(Errc::schema, ds.source_name + ": no metric columns");

    std::vector<PendingRecord> pending;
    std::unordered_set<std::uint64_t> seen_ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line, delim);
        auto field = [&](std::size_t i) { return i < fields.size() ? fields[i] : std::string_view{}; };

        SampleRecord rec;
        try {
            rec.timestamp = parse_timestamp(field(*ts_col));
        } catch (const Error& e) {
            ds.rejected_rows.push_back({line_no, e.what()});
            continue;
        }
        if (id_col) rec.entry_id = parse_entry_id(field(*id_col));
        for (const auto& [col, metric] : metric_cols) {
            if (auto v = parse_real(field(col))) rec.values.set(metric, *v);
        }
        if (rec.values.empty()) {
            ds.rejected_rows.push_back({line_no, "no parseable metric values"});
            continue;
        }
        if (rec.entry_id && !seen_ids.insert(*rec.entry_id).second) {
            ds.rejected_rows.push_back({line_no, "duplicate entry_id " + std::to_string(*rec.entry_id)});
            continue;
        }
        pending.push_back({std::move(rec), line_no});
    }

    std::stable_sort(pending.begin(), pending.end(), [](const auto& a, const auto& b) {
        return a.record.timestamp < b.record.timestamp;
    });

    std::optional<std::uint64_t> last_id;
    for (auto& p : pending) {
        if (p.record.entry_id) {
            if (last_id && *p.record.entry_id <= *last_id) {
                ds.rejected_rows.push_back(
                    {p.line, "entry_id " + std::to_string(*p.record.entry_id) + " out of timestamp order"});
                continue;
            }
            last_id = p.record.entry_id;
        }
        ds.records.push_back(std::move(p.record));
    }
    std::sort(ds.rejected_rows.begin(), ds.rejected_rows.end(),
              [](const auto& a, const auto& b) { return a.line < b.line; });

    if (ds.records.empty()) throw Error(Errc::empty_dataset, ds.source_name + ": no data rows");
    return ds;
}

RawDataset load_dataset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io, "cannot open " + path);
    return load_dataset(in, path);
}

namespace {

constexpr std::array<MetricKind, kMetricCount> kCsvOrder = {
    MetricKind::temperature, MetricKind::turbidity,   MetricKind::dissolved_oxygen,
    MetricKind::ph,          MetricKind::ammonia,     MetricKind::nitrate,
    MetricKind::population,  MetricKind::fish_length, MetricKind::fish_weight,
    MetricKind::tds,         MetricKind::nitrite,
};

}  // namespace

void write_dataset_header(std::ostream& out) {
    out << "created_at,entry_id";
    for (auto m : kCsvOrder) out << ',' << metric_column(m);
    out << '\n';
}

void write_dataset_row(std::ostream& out, const SampleRecord& r) {
    out << format_timestamp(r.timestamp) << ',';
    if (r.entry_id) out << *r.entry_id;
    for (auto m : kCsvOrder) {
        out << ',';
        if (auto v = r.values.get(m)) out << format_value(*v);
    }
    out << '\n';
}

void write_dataset_csv(std::ostream& out, const std::vector<SampleRecord>& records) {
    write_dataset_header(out);
    for (const auto& r : records) write_dataset_row(out, r);
}

RegularSeries resample(const RawDataset& dataset, MetricKind metric, const ResampleOptions& opts) {
    if (opts.step.count() <= 0) throw Error(Errc::parameter, "resample step must be positive");
    if (dataset.records.empty()) throw Error(Errc::empty_dataset, "resample: dataset is empty");

    const auto start = floor_to_step(dataset.records.front().timestamp, opts.step);
    const auto last = floor_to_step(dataset.records.back().timestamp, opts.step);
    const auto n = static_cast<std::size_t>((last - start) / opts.step) + 1;

    struct Acc {
        std::size_t n = 0;
        double mean = 0.0;
        double m2 = 0.0;
        double sum = 0.0;
    };
    std::vector<Acc> acc(n);
    bool any = false;
    for (const auto& r : dataset.records) {
        auto v = r.values.get(metric);
        if (!v) continue;
        any = true;
        auto i = static_cast<std::size_t>((r.timestamp - start) / opts.step);
        auto& a = acc[i];
        ++a.n;
        a.sum += *v;
        const double d = *v - a.mean;
        a.mean += d / static_cast<double>(a.n);
        a.m2 += d * (*v - a.mean);
    }
    if (!any) {
        throw Error(Errc::no_data, dataset.source_name + ": no values for " + std::string(metric_name(metric)));
    }

    RegularSeries s;
    s.metric = metric;
    s.start = start;
    s.step = opts.step;
    s.values.resize(n);
    s.counts.resize(n);
    s.high_spread.resize(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = acc[i];
        s.counts[i] = a.n;
        if (a.n == 0) continue;
        const double mean = a.sum / static_cast<double>(a.n);
        s.values[i] = mean;
        if (a.n >= 2 && std::abs(mean) > 0.0) {
            const double sd = std::sqrt(a.m2 / static_cast<double>(a.n - 1));
            s.high_spread[i] = sd / std::abs(mean) > opts.spread_cv_threshold;
        }
    }
    return s;
}

RegularSeries fill_gaps(const RegularSeries& series, std::size_t max_gap) {
    RegularSeries out = series;
    const auto n = series.values.size();
    std::size_t i = 0;
    while (i < n) {
        if (series.values[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && !series.values[j]) ++j;
        const std::size_t run = j - i;
        if (i > 0 && j < n && run <= max_gap) {
            const double a = *series.values[i - 1];
            const double b = *series.values[j];
            for (std::size_t k = i; k < j; ++k) {
                const double frac = static_cast<double>(k - i + 1) / static_cast<double>(run + 1);
                out.values[k] = a + (b - a) * frac;
            }
        }
        i = j;
    }
    return out;
}

std::pair<RegularSeries, RegularSeries> split(const RegularSeries& series, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw Error(Errc::split, "train fraction must lie strictly between 0 and 1");
    }
    const auto n = series.values.size();
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction));
    if (n_train == 0 || n_train == n) {
        throw Error(Errc::split, "split of " + std::to_string(n) + " buckets leaves one side empty");
    }
    auto part = [&](std::size_t from, std::size_t to) {
        RegularSeries s;
        s.metric = series.metric;
        s.step = series.step;
        s.start = series.bucket_start(from);
        s.values.assign(series.values.begin() + from, series.values.begin() + to);
        if (series.counts.size() == n) s.counts.assign(series.counts.begin() + from, series.counts.begin() + to);
        if (series.high_spread.size() == n) {
            s.high_spread.assign(series.high_spread.begin() + from, series.high_spread.begin() + to);
        }
        return s;
    };
    return {part(0, n_train), part(n_train, n)};
}

void write_series_csv(std::ostream& out, const RegularSeries& series) {
    out << "bucket_start,value\n";
    for (std::size_t i = 0; i < series.values.size(); ++i) {
        out << format_timestamp(series.bucket_start(i)) << ',';
        if (series.values[i]) out << format_value(*series.values[i]);
        out << '\n';
    }
}

}  // namespace aquamon

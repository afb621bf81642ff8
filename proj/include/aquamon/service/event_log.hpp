#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aquamon/timestamp.hpp"

namespace aquamon::service {

enum class EntryKind : std::uint8_t { reading, forecast, alert, actuator, estop, system };

std::string_view entry_kind_name(EntryKind k);
std::optional<EntryKind> entry_kind_from_name(std::string_view name);

struct LogEntry {
    std::uint64_t seq = 0;
    UtcSeconds at{};
    EntryKind kind = EntryKind::system;
    nlohmann::json payload;

    friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

nlohmann::json to_json(const LogEntry& e);
// Errc::parse on a malformed entry.
LogEntry log_entry_from_json(const nlohmann::json& doc);

struct Snapshot {
    std::uint64_t seq = 0;  // last entry folded into the document
    nlohmann::json document;
};

// What open() found on disk.
struct LogOpenReport {
    std::size_t entries = 0;
    std::size_t dropped_lines = 0;  // torn or invalid tail
    std::uintmax_t dropped_bytes = 0;
    bool snapshot_used = false;
    bool snapshot_discarded = false;  // newer than the surviving log
};

// Append-only log of one JSON document per line (events.jsonl) plus an
// atomically replaced snapshot (snapshot.json) in one directory. Sequence
// numbers start at 1 and have no gaps. Reading the file stops at the first
// line that is torn, unparsable or out of sequence; the file is cut back to
// the last good entry.
class EventLog {
public:
    explicit EventLog(std::filesystem::path dir);
    ~EventLog();

    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    const LogOpenReport& open_report() const { return report_; }
    const std::optional<Snapshot>& snapshot() const { return snapshot_; }

    // Entries loaded at open time with seq > after (all of them by default).
    std::vector<LogEntry> loaded_after(std::uint64_t after = 0) const;

    // Thread-safe. Errc::io when the write fails; the entry is then not
    // assigned a sequence number.
    LogEntry append(EntryKind kind, UtcSeconds at, nlohmann::json payload);

    std::uint64_t last_seq() const;
    std::vector<LogEntry> read_after(std::uint64_t after, std::size_t limit = SIZE_MAX) const;
    // Waits until an entry past `after` exists, the timeout expires or the log closes.
    std::vector<LogEntry> wait_after(std::uint64_t after, std::chrono::milliseconds timeout,
                                     std::size_t limit = SIZE_MAX) const;

    void write_snapshot(const Snapshot& s);

    // Wakes waiters; later appends fail.
    void close();
    bool closed() const;

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path log_path() const { return dir_ / "events.jsonl"; }
    std::filesystem::path snapshot_path() const { return dir_ / "snapshot.json"; }

private:
    std::filesystem::path dir_;
    int fd_ = -1;
    LogOpenReport report_;
    std::optional<Snapshot> snapshot_;
    std::size_t loaded_count_ = 0;

    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    std::vector<LogEntry> entries_;
    bool closed_ = false;
};

}  // namespace aquamon::service

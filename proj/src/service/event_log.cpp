#include "aquamon/service/event_log.hpp"

#include <array>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include "aquamon/error.hpp"

namespace aquamon::service {

namespace {

constexpr std::array<std::string_view, 6> kKindNames{"reading", "forecast", "alert", "actuator", "estop", "system"};

std::string errno_text() { return std::strerror(errno); }

void write_all(int fd, std::string_view bytes, const std::string& what) {
    while (!bytes.empty()) {
        const auto n = ::write(fd, bytes.data(), bytes.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(Errc::io, what + ": " + errno_text());
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
}

}  // namespace

std::string_view entry_kind_name(EntryKind k) { return kKindNames[static_cast<std::size_t>(k)]; }

std::optional<EntryKind> entry_kind_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == name) return static_cast<EntryKind>(i);
    }
    return std::nullopt;
}

nlohmann::json to_json(const LogEntry& e) {
    return {{"seq", e.seq}, {"at", format_iso8601(e.at)}, {"kind", entry_kind_name(e.kind)}, {"payload", e.payload}};
}

LogEntry log_entry_from_json(const nlohmann::json& doc) {
    try {
        LogEntry e;
        e.seq = doc.at("seq").get<std::uint64_t>();
        e.at = parse_timestamp(doc.at("at").get<std::string>());
        const auto kind = entry_kind_from_name(doc.at("kind").get<std::string>());
        if (!kind) throw Error(Errc::parse, "unknown entry kind");
        e.kind = *kind;
        e.payload = doc.at("payload");
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(Errc::parse, std::string("malformed log entry: ") + ex.what());
    } catch (const Error& ex) {
        throw Error(Errc::parse, std::string("malformed log entry: ") + ex.what());
    }
}

EventLog::EventLog(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(Errc::io, "cannot create " + dir_.string() + ": " + ec.message());

    std::uintmax_t good_bytes = 0;
    std::uintmax_t total_bytes = 0;
    if (std::filesystem::exists(log_path())) {
        std::ifstream in(log_path(), std::ios::binary);
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        total_bytes = content.size();
        std::size_t pos = 0;
        bool stopped = false;
        while (pos < content.size()) {
            const auto nl = content.find('\n', pos);
            if (stopped || nl == std::string::npos) {
                ++report_.dropped_lines;
                if (nl == std::string::npos) break;
                pos = nl + 1;
                continue;
            }
            try {
                auto e = log_entry_from_json(nlohmann::json::parse(content.substr(pos, nl - pos)));
                if (e.seq != entries_.size() + 1) throw Error(Errc::parse, "sequence gap");
                entries_.push_back(std::move(e));
                good_bytes = nl + 1;
            } catch (const std::exception&) {
                stopped = true;
                ++report_.dropped_lines;
            }
            pos = nl + 1;
        }
        if (good_bytes < total_bytes) {
            report_.dropped_bytes = total_bytes - good_bytes;
            std::filesystem::resize_file(log_path(), good_bytes, ec);
            if (ec) throw Error(Errc::io, "cannot truncate " + log_path().string() + ": " + ec.message());
        }
    }
    report_.entries = entries_.size();
    loaded_count_ = entries_.size();

    if (std::filesystem::exists(snapshot_path())) {
        try {
            std::ifstream in(snapshot_path());
            const auto doc = nlohmann::json::parse(in);
            Snapshot s{doc.at("seq").get<std::uint64_t>(), doc.at("document")};
            if (s.seq <= entries_.size()) {
                snapshot_ = std::move(s);
                report_.snapshot_used = true;
            } else {
                report_.snapshot_discarded = true;
            }
        } catch (const std::exception&) {
            report_.snapshot_discarded = true;
        }
    }

    fd_ = ::open(log_path().c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(Errc::io, "cannot open " + log_path().string() + ": " + errno_text());
}

EventLog::~EventLog() {
    close();
    if (fd_ >= 0) ::close(fd_);
}

std::vector<LogEntry> EventLog::loaded_after(std::uint64_t after) const {
    std::lock_guard lock(mu_);
    if (after >= loaded_count_) return {};
    return {entries_.begin() + static_cast<std::ptrdiff_t>(after),
            entries_.begin() + static_cast<std::ptrdiff_t>(loaded_count_)};
}

LogEntry EventLog::append(EntryKind kind, UtcSeconds at, nlohmann::json payload) {
    std::lock_guard lock(mu_);
    if (closed_) throw Error(Errc::io, "event log is closed");
    LogEntry e{entries_.size() + 1, at, kind, std::move(payload)};
    const auto line = to_json(e).dump() + "\n";
    write_all(fd_, line, "event log append");
    if (kind == EntryKind::estop && ::fdatasync(fd_) != 0) {
        throw Error(Errc::io, "event log sync: " + errno_text());
    }
    entries_.push_back(e);
    cv_.notify_all();
    return e;
}

std::uint64_t EventLog::last_seq() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

std::vector<LogEntry> EventLog::read_after(std::uint64_t after, std::size_t limit) const {
    std::lock_guard lock(mu_);
    std::vector<LogEntry> out;
    for (auto i = after; i < entries_.size() && out.size() < limit; ++i) out.push_back(entries_[i]);
    return out;
}

std::vector<LogEntry> EventLog::wait_after(std::uint64_t after, std::chrono::milliseconds timeout,
                                           std::size_t limit) const {
    {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, timeout, [&] { return closed_ || entries_.size() > after; });
    }
    return read_after(after, limit);
}

void EventLog::write_snapshot(const Snapshot& s) {
    const auto tmp = dir_ / "snapshot.json.tmp";
    const auto text = nlohmann::json{{"seq", s.seq}, {"document", s.document}}.dump();
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw Error(Errc::io, "cannot write snapshot: " + errno_text());
    try {
        write_all(fd, text, "snapshot write");
        if (::fsync(fd) != 0) throw Error(Errc::io, "snapshot sync: " + errno_text());
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
    std::error_code ec;
    std::filesystem::rename(tmp, snapshot_path(), ec);
    if (ec) throw Error(Errc::io, "cannot replace snapshot: " + ec.message());
}

void EventLog::close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_.notify_all();
}

bool EventLog::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

}  // namespace aquamon::service

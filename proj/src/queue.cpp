#include "alignfleet/queue.hpp"

#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace alignfleet {
namespace {

using nlohmann::json;

json task_to_json(const TaskSpec& task) {
    json j;
    j["sra_id"] = task.sra_id;
    j["compressed_size_bytes"] = task.compressed_size_bytes;
    if (task.expected_total_reads) j["expected_total_reads"] = *task.expected_total_reads;
    j["tissue"] = task.tissue;
    if (task.fastq_expansion_factor) j["fastq_expansion_factor"] = *task.fastq_expansion_factor;
    if (task.sort_memory_gib) j["sort_memory_gib"] = *task.sort_memory_gib;
    if (task.final_mapping_rate) j["final_mapping_rate"] = *task.final_mapping_rate;
    return j;
}

TaskSpec task_from_json(const json& j) {
    TaskSpec task;
    task.sra_id = j.at("sra_id").get<std::string>();
    task.compressed_size_bytes = j.at("compressed_size_bytes").get<std::uint64_t>();
    if (j.contains("expected_total_reads"))
        task.expected_total_reads = j["expected_total_reads"].get<std::uint64_t>();
    task.tissue = j.value("tissue", std::string{});
    if (j.contains("fastq_expansion_factor"))
        task.fastq_expansion_factor = j["fastq_expansion_factor"].get<double>();
    if (j.contains("sort_memory_gib"))
        task.sort_memory_gib = j["sort_memory_gib"].get<double>();
    if (j.contains("final_mapping_rate"))
        task.final_mapping_rate = j["final_mapping_rate"].get<double>();
    return task;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

}  // namespace

ManifestLoadResult load_manifest_csv(const std::string& path, const AdmissionRange& range) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty manifest: " + path);
    const auto header = split_csv_line(line);
    auto column = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };
    const int c_id = column("sra_id"), c_size = column("size_bytes");
    const int c_reads = column("expected_reads"), c_tissue = column("tissue");
    const int c_rate = column("final_mapping_rate");
    const int c_exp = column("fastq_expansion"), c_sort = column("sort_memory_gib");
    if (c_id < 0 || c_size < 0 || c_reads < 0 || c_tissue < 0)
        throw std::runtime_error("manifest missing required columns: " + path);

    ManifestLoadResult result;
    std::unordered_set<std::string> seen;
    auto field = [](const std::vector<std::string>& fields, int idx) -> std::string {
        return (idx >= 0 && idx < static_cast<int>(fields.size())) ? fields[idx] : "";
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        TaskSpec task;
        task.sra_id = field(fields, c_id);
        task.tissue = field(fields, c_tissue);
        try {
            task.compressed_size_bytes = std::stoull(field(fields, c_size));
            const std::string reads = field(fields, c_reads);
            if (!reads.empty()) task.expected_total_reads = std::stoull(reads);
            const std::string rate = field(fields, c_rate);
            if (!rate.empty()) task.final_mapping_rate = std::stod(rate);
            const std::string exp = field(fields, c_exp);
            if (!exp.empty()) task.fastq_expansion_factor = std::stod(exp);
            const std::string sort = field(fields, c_sort);
            if (!sort.empty()) task.sort_memory_gib = std::stod(sort);
        } catch (const std::exception&) {
            result.rejected.emplace_back(task, "malformed row: " + line);
            continue;
        }
        if (task.sra_id.empty()) {
            result.rejected.emplace_back(task, "empty sra_id");
            continue;
        }
        if (!seen.insert(task.sra_id).second) {
            result.rejected.emplace_back(task, "duplicate sra_id");
            continue;
        }
        if (range.enabled && (task.compressed_size_bytes < range.min_bytes ||
                              task.compressed_size_bytes > range.max_bytes)) {
            result.rejected.emplace_back(task, "size outside admission range");
            continue;
        }
        result.admitted.push_back(std::move(task));
    }
    return result;
}

void write_manifest_csv(const std::string& path, const std::vector<TaskSpec>& tasks) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << "sra_id,size_bytes,expected_reads,tissue,final_mapping_rate\n";
    for (const auto& task : tasks) {
        out << task.sra_id << ',' << task.compressed_size_bytes << ',';
        if (task.expected_total_reads) out << *task.expected_total_reads;
        out << ',' << task.tissue << ',';
        if (task.final_mapping_rate) out << *task.final_mapping_rate;
        out << '\n';
    }
}

VisibilityQueue::VisibilityQueue(std::string journal_path) {
    if (std::filesystem::exists(journal_path)) replay(journal_path);
    journal_out_.open(journal_path, std::ios::app);
    if (!journal_out_) throw std::runtime_error("cannot open queue journal: " + journal_path);
}

void VisibilityQueue::journal(const std::string& op, std::uint64_t message_id, double now,
                              const TaskSpec* payload) {
    if (!journal_out_.is_open()) return;
    json j;
    j["op"] = op;
    j["message_id"] = message_id;
    j["timestamp"] = now;
    if (payload) j["payload"] = task_to_json(*payload);
    journal_out_ << j.dump() << '\n';
    journal_out_.flush();
}

void VisibilityQueue::replay(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            continue;  // torn tail write
        }
        const std::string op = j.value("op", "");
        const std::uint64_t id = j.value("message_id", 0ull);
        if (op == "enqueue" && j.contains("payload")) {
            Message m;
            m.task = task_from_json(j["payload"]);
            m.id = id;
            messages_[id] = std::move(m);
            next_id_ = std::max(next_id_, id + 1);
        } else if (op == "lease") {
            auto it = messages_.find(id);
            if (it != messages_.end()) {
                it->second.attempt += 1;
                it->second.visible_after = j.value("visible_after", 0.0);
            }
        } else if (op == "ack") {
            messages_.erase(id);
        } else if (op == "nack") {
            auto it = messages_.find(id);
            if (it != messages_.end()) it->second.visible_after = j.value("timestamp", 0.0);
        } else if (op == "extend") {
            auto it = messages_.find(id);
            if (it != messages_.end())
                it->second.visible_after = j.value("visible_after", it->second.visible_after);
        }
    }
    // Receipts do not survive a restart; leased messages redeliver after
    // their recorded visibility expires.
}

std::uint64_t VisibilityQueue::enqueue(const TaskSpec& task, double now) {
    std::lock_guard lock(mutex_);
    Message m;
    m.task = task;
    m.id = next_id_++;
    m.visible_after = now;
    const std::uint64_t id = m.id;
    messages_[id] = std::move(m);
    journal("enqueue", id, now, &task);
    return id;
}

std::optional<LeasedMessage> VisibilityQueue::lease(double visibility_seconds, double now) {
    std::lock_guard lock(mutex_);
    for (auto& [id, m] : messages_) {
        if (m.visible_after > now) continue;
        m.attempt += 1;
        m.visible_after = now + visibility_seconds;
        m.receipt = next_receipt_++;
        receipts_[m.receipt] = id;
        if (journal_out_.is_open()) {
            json j;
            j["op"] = "lease";
            j["message_id"] = id;
            j["timestamp"] = now;
            j["visible_after"] = m.visible_after;
            journal_out_ << j.dump() << '\n';
            journal_out_.flush();
        }
        LeasedMessage lease;
        lease.task = m.task;
        lease.message_id = id;
        lease.attempt = m.attempt;
        lease.receipt = m.receipt;
        lease.visible_after = m.visible_after;
        return lease;
    }
    return std::nullopt;
}

QueueOpStatus VisibilityQueue::ack(std::uint64_t receipt, double now) {
    std::lock_guard lock(mutex_);
    auto it = receipts_.find(receipt);
    if (it == receipts_.end()) return QueueOpStatus::UnknownReceipt;
    auto mit = messages_.find(it->second);
    receipts_.erase(it);
    if (mit == messages_.end()) return QueueOpStatus::UnknownReceipt;
    if (mit->second.receipt != receipt || mit->second.visible_after <= now) {
        // Lease timed out; the message is already eligible for redelivery.
        return QueueOpStatus::ExpiredReceipt;
    }
    journal("ack", mit->first, now);
    messages_.erase(mit);
    return QueueOpStatus::Ok;
}

QueueOpStatus VisibilityQueue::nack(std::uint64_t receipt, double now) {
    std::lock_guard lock(mutex_);
    auto it = receipts_.find(receipt);
    if (it == receipts_.end()) return QueueOpStatus::UnknownReceipt;
    auto mit = messages_.find(it->second);
    receipts_.erase(it);
    if (mit == messages_.end()) return QueueOpStatus::UnknownReceipt;
    if (mit->second.receipt != receipt || mit->second.visible_after <= now)
        return QueueOpStatus::ExpiredReceipt;
    mit->second.visible_after = now;
    mit->second.receipt = 0;
    journal("nack", mit->first, now);
    return QueueOpStatus::Ok;
}

QueueOpStatus VisibilityQueue::extend(std::uint64_t receipt, double extra_seconds,
                                      double now) {
    std::lock_guard lock(mutex_);
    auto it = receipts_.find(receipt);
    if (it == receipts_.end()) return QueueOpStatus::UnknownReceipt;
    auto mit = messages_.find(it->second);
    if (mit == messages_.end()) return QueueOpStatus::UnknownReceipt;
    if (mit->second.receipt != receipt || mit->second.visible_after <= now)
        return QueueOpStatus::ExpiredReceipt;
    mit->second.visible_after += extra_seconds;
    if (journal_out_.is_open()) {
        json j;
        j["op"] = "extend";
        j["message_id"] = mit->first;
        j["timestamp"] = now;
        j["visible_after"] = mit->second.visible_after;
        journal_out_ << j.dump() << '\n';
        journal_out_.flush();
    }
    return QueueOpStatus::Ok;
}

std::size_t VisibilityQueue::pending_count() const {
    std::lock_guard lock(mutex_);
    return messages_.size();
}

QueueId QueueRouter::route(const TaskSpec& task, std::uint64_t size_threshold_bytes) {
    if (size_threshold_bytes == 0) return QueueId::Small;
    return task.compressed_size_bytes < size_threshold_bytes ? QueueId::Small
                                                             : QueueId::Large;
}

QueueId QueueRouter::route(const TaskSpec& task) const {
    return route(task, size_threshold_bytes_);
}

std::uint64_t QueueRouter::enqueue(const TaskSpec& task, double now) {
    return queue(route(task)).enqueue(task, now);
}

std::uint64_t QueueRouter::enqueue_to(QueueId id, const TaskSpec& task, double now) {
    return queue(id).enqueue(task, now);
}

std::optional<std::pair<QueueId, LeasedMessage>> QueueRouter::lease(
    double visibility_seconds, double now) {
    if (auto m = small_.lease(visibility_seconds, now))
        return std::make_pair(QueueId::Small, std::move(*m));
    if (auto m = large_.lease(visibility_seconds, now))
        return std::make_pair(QueueId::Large, std::move(*m));
    return std::nullopt;
}

std::string to_string(TaskStatus status) {
    switch (status) {
        case TaskStatus::InProgress: return "in_progress";
        case TaskStatus::Completed: return "completed";
        case TaskStatus::Failed: return "failed";
    }
    return "unknown";
}

std::optional<TaskStatus> task_status_from_string(const std::string& text) {
    if (text == "in_progress") return TaskStatus::InProgress;
    if (text == "completed") return TaskStatus::Completed;
    if (text == "failed") return TaskStatus::Failed;
    return std::nullopt;
}

namespace {

json ledger_record_to_json(const LedgerRecord& r) {
    json j;
    j["sra_id"] = r.sra_id;
    j["status"] = to_string(r.status);
    j["worker_id"] = r.worker_id;
    json timings = json::object();
    for (const auto& [stage, seconds] : r.stage_timings) timings[stage] = seconds;
    j["stage_timings"] = std::move(timings);
    if (r.final_mapping_rate) j["final_mapping_rate"] = *r.final_mapping_rate;
    j["attempt"] = r.attempt;
    j["terminated_early"] = r.terminated_early;
    return j;
}

std::optional<LedgerRecord> ledger_record_from_json(const json& j) {
    LedgerRecord r;
    r.sra_id = j.value("sra_id", "");
    const auto status = task_status_from_string(j.value("status", ""));
    if (r.sra_id.empty() || !status) return std::nullopt;
    r.status = *status;
    r.worker_id = j.value("worker_id", "");
    if (j.contains("stage_timings"))
        for (const auto& [stage, seconds] : j["stage_timings"].items())
            r.stage_timings.emplace_back(stage, seconds.get<double>());
    if (j.contains("final_mapping_rate"))
        r.final_mapping_rate = j["final_mapping_rate"].get<double>();
    r.attempt = j.value("attempt", 1u);
    r.terminated_early = j.value("terminated_early", false);
    return r;
}

}  // namespace

Ledger::Ledger(std::string path) {
    if (std::filesystem::exists(path)) {
        std::ifstream in(path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::parse_error&) {
                continue;
            }
            if (auto r = ledger_record_from_json(j)) {
                if (r->status == TaskStatus::Completed && completed_[r->sra_id]) {
                    ++conflicts_;
                    continue;
                }
                latest_[r->sra_id] = r->status;
                if (r->status == TaskStatus::Completed) completed_[r->sra_id] = true;
                records_.push_back(std::move(*r));
            }
        }
    }
    out_.open(path, std::ios::app);
    if (!out_) throw std::runtime_error("cannot open ledger: " + path);
}

void Ledger::append_to_file(const LedgerRecord& record) {
    if (!out_.is_open()) return;
    out_ << ledger_record_to_json(record).dump() << '\n';
    out_.flush();
}

bool Ledger::record(const LedgerRecord& record) {
    std::lock_guard lock(mutex_);
    if (record.status == TaskStatus::Completed && completed_[record.sra_id]) {
        ++conflicts_;  // ConflictingCompletion: duplicate is a no-op
        return false;
    }
    latest_[record.sra_id] = record.status;
    if (record.status == TaskStatus::Completed) completed_[record.sra_id] = true;
    records_.push_back(record);
    append_to_file(record);
    return true;
}

bool Ledger::already_processed(const std::string& sra_id) const {
    std::lock_guard lock(mutex_);
    auto it = completed_.find(sra_id);
    return it != completed_.end() && it->second;
}

std::optional<TaskStatus> Ledger::latest_status(const std::string& sra_id) const {
    std::lock_guard lock(mutex_);
    auto it = latest_.find(sra_id);
    if (it == latest_.end()) return std::nullopt;
    return it->second;
}

std::size_t Ledger::completed_count() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& [_, done] : completed_)
        if (done) ++n;
    return n;
}

std::size_t Ledger::conflicting_completions() const {
    std::lock_guard lock(mutex_);
    return conflicts_;
}

std::vector<LedgerRecord> Ledger::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

}  // namespace alignfleet

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <fstream>

namespace alignfleet {

struct TaskSpec {
    std::string sra_id;
    std::uint64_t compressed_size_bytes = 0;
    std::optional<std::uint64_t> expected_total_reads;
    std::string tissue;
    std::optional<double> fastq_expansion_factor;
    std::optional<double> sort_memory_gib;
    std::optional<double> final_mapping_rate;  // synthetic-mode trajectory hint
};

struct ManifestLoadResult {
    std::vector<TaskSpec> admitted;
    std::vector<std::pair<TaskSpec, std::string>> rejected;  // task, reason
};

struct AdmissionRange {
    std::uint64_t min_bytes = 200ull * 1000 * 1000;        // 200 MB
    std::uint64_t max_bytes = 30ull * 1000 * 1000 * 1000;  // 30 GB
    bool enabled = true;
};

// Manifest CSV: sra_id,size_bytes,expected_reads,tissue with optional extra
// columns final_mapping_rate, fastq_expansion, sort_memory_gib. Empty
// expected_reads means unknown. Duplicate sra_ids and out-of-range sizes are
// rejected, not fatal.
ManifestLoadResult load_manifest_csv(const std::string& path,
                                     const AdmissionRange& range = {});

void write_manifest_csv(const std::string& path, const std::vector<TaskSpec>& tasks);

enum class QueueOpStatus { Ok, UnknownReceipt, ExpiredReceipt };

struct LeasedMessage {
    TaskSpec task;
    std::uint64_t message_id = 0;
    std::uint32_t attempt = 1;
    std::uint64_t receipt = 0;
    double visible_after = 0.0;
};

// In-process at-least-once queue with visibility timeouts. Time flows through
// explicit `now` arguments so the same queue serves wall-clock workers and the
// virtual-time simulator. Optionally journaled to a line-delimited JSON file
// and replayed on open.
class VisibilityQueue {
  public:
    VisibilityQueue() = default;
    explicit VisibilityQueue(std::string journal_path);

    std::uint64_t enqueue(const TaskSpec& task, double now = 0.0);
    std::optional<LeasedMessage> lease(double visibility_seconds, double now);
    QueueOpStatus ack(std::uint64_t receipt, double now);
    QueueOpStatus nack(std::uint64_t receipt, double now);
    QueueOpStatus extend(std::uint64_t receipt, double extra_seconds, double now);

    std::size_t pending_count() const;  // messages not yet acked (leased or not)
    bool empty() const { return pending_count() == 0; }

  private:
    struct Message {
        TaskSpec task;
        std::uint64_t id = 0;
        std::uint32_t attempt = 0;  // completed deliveries so far
        double visible_after = 0.0;
        std::uint64_t receipt = 0;  // 0 = not leased
    };

    void journal(const std::string& op, std::uint64_t message_id, double now,
                 const TaskSpec* payload = nullptr);
    void replay(const std::string& path);

    mutable std::mutex mutex_;
    std::map<std::uint64_t, Message> messages_;
    std::unordered_map<std::uint64_t, std::uint64_t> receipts_;  // receipt -> message id
    std::uint64_t next_id_ = 1;
    std::uint64_t next_receipt_ = 1;
    std::ofstream journal_out_;
};

enum class QueueId { Small, Large };

// Size-routed pair of queues. Threshold 0 = single-queue mode (everything
// routes Small).
class QueueRouter {
  public:
    explicit QueueRouter(std::uint64_t size_threshold_bytes = 0)
        : size_threshold_bytes_(size_threshold_bytes) {}

    static QueueId route(const TaskSpec& task, std::uint64_t size_threshold_bytes);
    QueueId route(const TaskSpec& task) const;

    std::uint64_t enqueue(const TaskSpec& task, double now = 0.0);
    std::uint64_t enqueue_to(QueueId id, const TaskSpec& task, double now = 0.0);
    // Drains Small before Large.
    std::optional<std::pair<QueueId, LeasedMessage>> lease(double visibility_seconds,
                                                           double now);
    VisibilityQueue& queue(QueueId id) { return id == QueueId::Small ? small_ : large_; }
    bool double_queue_mode() const { return size_threshold_bytes_ > 0; }
    bool empty() const { return small_.empty() && large_.empty(); }

  private:
    std::uint64_t size_threshold_bytes_;
    VisibilityQueue small_;
    VisibilityQueue large_;
};

enum class TaskStatus { InProgress, Completed, Failed };

struct LedgerRecord {
    std::string sra_id;
    TaskStatus status = TaskStatus::InProgress;
    std::string worker_id;
    std::vector<std::pair<std::string, double>> stage_timings;  // pipeline order
    std::optional<double> final_mapping_rate;
    std::uint32_t attempt = 1;
    bool terminated_early = false;
};

// Append-only completion ledger backed by a JSONL file. At most one
// `completed` record per sra_id takes effect; later duplicates are counted
// and dropped.
class Ledger {
  public:
    Ledger() = default;
    explicit Ledger(std::string path);  // replays existing records

    // Returns false for a duplicate `completed` (recorded as a no-op).
    bool record(const LedgerRecord& record);
    bool already_processed(const std::string& sra_id) const;
    std::optional<TaskStatus> latest_status(const std::string& sra_id) const;
    std::size_t completed_count() const;
    std::size_t conflicting_completions() const;
    std::vector<LedgerRecord> records() const;

  private:
    void append_to_file(const LedgerRecord& record);

    mutable std::mutex mutex_;
    std::vector<LedgerRecord> records_;
    std::unordered_map<std::string, TaskStatus> latest_;
    std::unordered_map<std::string, bool> completed_;
    std::size_t conflicts_ = 0;
    std::ofstream out_;
};

std::string to_string(TaskStatus status);
std::optional<TaskStatus> task_status_from_string(const std::string& text);

}  // namespace alignfleet

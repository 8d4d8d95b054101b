#include "brave/threading.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace brave {
namespace {

std::atomic<int> g_max_threads{0};  // 0 = unresolved, use hardware_concurrency

int resolve_threads() {
  int n = g_max_threads.load(std::memory_order_relaxed);
  if (n > 0) return n;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

bool& nested_flag() {
  thread_local bool inside = false;
  return inside;
}

// Lazily started pool. Workers pick up one (begin,end) chunk per job; the
// calling thread executes chunk 0 itself.
class Pool {
 public:
  static Pool& instance() {
    static Pool pool;
    return pool;
  }

  void run(int64_t n, int workers, const std::function<void(int64_t, int64_t)>& inner) {
    // Workers run the user function with the nesting flag set so that any
    // parallel_for issued from inside it executes inline on that worker.
    std::function<void(int64_t, int64_t)> fn = [&inner](int64_t b, int64_t e) {
      nested_flag() = true;
      inner(b, e);
      nested_flag() = false;
    };
    ensure_started(workers - 1);
    std::vector<std::pair<int64_t, int64_t>> chunks;
    int64_t per = (n + workers - 1) / workers;
    for (int64_t b = 0; b < n; b += per) chunks.emplace_back(b, std::min(n, b + per));

    {
      std::unique_lock lk(mu_);
      job_fn_ = &fn;
      chunks_ = std::move(chunks);
      next_chunk_ = 1;  // chunk 0 runs on the caller
      pending_ = static_cast<int>(chunks_.size());
      ++job_id_;
    }
    cv_.notify_all();

    if (!chunks_.empty()) {
      fn(chunks_[0].first, chunks_[0].second);
      finish_chunk();
    }
    // Help with remaining chunks instead of blocking idle.
    while (true) {
      std::pair<int64_t, int64_t> c;
      {
        std::unique_lock lk(mu_);
        if (next_chunk_ >= chunks_.size()) break;
        c = chunks_[next_chunk_++];
      }
      fn(c.first, c.second);
      finish_chunk();
    }
    std::unique_lock lk(mu_);
    done_cv_.wait(lk, [&] { return pending_ == 0; });
  }

  ~Pool() {
    {
      std::unique_lock lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

 private:
  void ensure_started(int helpers) {
    std::unique_lock lk(mu_);
    while (static_cast<int>(threads_.size()) < helpers) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  void worker_loop() {
    uint64_t seen_job = 0;
    while (true) {
      std::pair<int64_t, int64_t> c;
      const std::function<void(int64_t, int64_t)>* fn = nullptr;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return stop_ || (job_id_ != seen_job && next_chunk_ < chunks_.size()); });
        if (stop_) return;
        if (next_chunk_ >= chunks_.size()) {
          seen_job = job_id_;
          continue;
        }
        c = chunks_[next_chunk_++];
        fn = job_fn_;
        if (next_chunk_ >= chunks_.size()) seen_job = job_id_;
      }
      (*fn)(c.first, c.second);
      finish_chunk();
    }
  }

  void finish_chunk() {
    std::unique_lock lk(mu_);
    if (--pending_ == 0) done_cv_.notify_all();
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::vector<std::thread> threads_;
  const std::function<void(int64_t, int64_t)>* job_fn_ = nullptr;
  std::vector<std::pair<int64_t, int64_t>> chunks_;
  size_t next_chunk_ = 0;
  int pending_ = 0;
  uint64_t job_id_ = 0;
  bool stop_ = false;
};

}  // namespace

int max_threads() { return resolve_threads(); }

void set_max_threads(int n) { g_max_threads.store(n, std::memory_order_relaxed); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  int workers = std::min<int64_t>(resolve_threads(), n);
  if (nested_flag() || workers <= 1 || n < 256) {
    fn(0, n);
    return;
  }
  nested_flag() = true;
  Pool::instance().run(n, workers, fn);
  nested_flag() = false;
}

}  // namespace brave

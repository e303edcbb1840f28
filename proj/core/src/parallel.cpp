#include "ciss/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace ciss {

namespace {

int g_num_threads = 1;

// Persistent worker pool; parallel_for is called once per layer per batch,
// so spawning threads on demand would dominate the small per-call work.
class Pool {
public:
  static Pool& instance() {
    static Pool pool;
    return pool;
  }

  void run(int workers, int64_t n, const std::function<void(int64_t)>& fn) {
    std::unique_lock<std::mutex> lock(mu_);
    ensure_workers(workers - 1);
    fn_ = &fn;
    next_ = 0;
    limit_ = n;
    pending_ = workers - 1;
    ++generation_;
    cv_work_.notify_all();
    lock.unlock();

    work(); // the caller participates

    lock.lock();
    cv_done_.wait(lock, [&] { return pending_ == 0; });
    fn_ = nullptr;
  }

private:
  Pool() = default;
  ~Pool() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      stop_ = true;
      cv_work_.notify_all();
    }
    for (auto& t : threads_) t.join();
  }

  void ensure_workers(int count) {
    while (static_cast<int>(threads_.size()) < count) {
      threads_.emplace_back([this, my_gen = generation_]() { worker_loop(my_gen); });
    }
  }

  void work() {
    const auto& fn = *fn_;
    for (;;) {
      const int64_t i = next_.fetch_add(1, std::memory_order_relaxed);
      if (i >= limit_) break;
      fn(i);
    }
  }

  void worker_loop(uint64_t seen_generation) {
    for (;;) {
      std::unique_lock<std::mutex> lock(mu_);
      cv_work_.wait(lock, [&] { return stop_ || generation_ != seen_generation; });
      if (stop_) return;
      seen_generation = generation_;
      if (fn_ == nullptr) continue;
      lock.unlock();
      work();
      lock.lock();
      if (--pending_ == 0) cv_done_.notify_all();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_work_, cv_done_;
  std::vector<std::thread> threads_;
  const std::function<void(int64_t)>* fn_ = nullptr;
  std::atomic<int64_t> next_{0};
  int64_t limit_ = 0;
  int pending_ = 0;
  uint64_t generation_ = 0;
  bool stop_ = false;
};

} // namespace

void set_num_threads(int n) { g_num_threads = n < 1 ? 1 : n; }
int num_threads() { return g_num_threads; }

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  const int workers = static_cast<int>(std::min<int64_t>(g_num_threads, n));
  if (workers <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  Pool::instance().run(workers, n, fn);
}

} // namespace ciss

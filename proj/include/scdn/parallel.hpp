#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace scdn {

// Minimal persistent worker pool. parallel_for(count, fn) calls fn(i) for
// every i in [0, count) exactly once; indices are split into contiguous
// blocks, one per worker, so every output element is produced by a single
// thread in a fixed order. Results are therefore bit-identical regardless
// of scheduling or thread count.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  // 0 = hardware concurrency. May be called before the first parallel_for.
  void set_threads(int n) {
    std::lock_guard<std::mutex> lk(config_mutex_);
    requested_ = n;
  }

  void parallel_for(std::size_t count,
                    const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    ensure_started();
    const std::size_t workers = threads_.size() + 1;  // + caller
    if (workers == 1 || count == 1) {
      for (std::size_t i = 0; i < count; ++i) fn(i);
      return;
    }
    {
      std::unique_lock<std::mutex> lk(mutex_);
      job_fn_ = &fn;
      job_count_ = count;
      job_workers_ = workers;
      pending_ = workers - 1;
      ++generation_;
      cv_.notify_all();
    }
    run_block(fn, count, 0, workers);
    std::unique_lock<std::mutex> lk(mutex_);
    done_cv_.wait(lk, [&] { return pending_ == 0; });
    job_fn_ = nullptr;
  }

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lk(mutex_);
      stop_ = true;
      cv_.notify_all();
    }
    for (auto& t : threads_) t.join();
  }

 private:
  ThreadPool() = default;

  static void run_block(const std::function<void(std::size_t)>& fn,
                        std::size_t count, std::size_t rank,
                        std::size_t workers) {
    const std::size_t lo = count * rank / workers;
    const std::size_t hi = count * (rank + 1) / workers;
    for (std::size_t i = lo; i < hi; ++i) fn(i);
  }

  void ensure_started() {
    std::lock_guard<std::mutex> lk(config_mutex_);
    if (started_) return;
    started_ = true;
    int n = requested_;
    if (n <= 0) n = int(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    for (int r = 1; r < n; ++r) {
      threads_.emplace_back([this, r] { worker_loop(std::size_t(r)); });
    }
  }

  void worker_loop(std::size_t rank) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t)>* fn = nullptr;
      std::size_t count = 0, workers = 0;
      {
        std::unique_lock<std::mutex> lk(mutex_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        fn = job_fn_;
        count = job_count_;
        workers = job_workers_;
      }
      run_block(*fn, count, rank, workers);
      {
        std::lock_guard<std::mutex> lk(mutex_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::mutex config_mutex_;
  int requested_ = 0;
  bool started_ = false;

  std::mutex mutex_;
  std::condition_variable cv_, done_cv_;
  std::vector<std::thread> threads_;
  const std::function<void(std::size_t)>* job_fn_ = nullptr;
  std::size_t job_count_ = 0, job_workers_ = 0, pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

inline void parallel_for(std::size_t count,
                         const std::function<void(std::size_t)>& fn) {
  ThreadPool::instance().parallel_for(count, fn);
}

}  // namespace scdn

#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

namespace gds {

// Fixed-size pool. Tasks are independent closures; parallel_for_blocks gives
// each block its own output slot and the caller combines slots in block order,
// so results do not depend on the worker count or scheduling.
class ThreadPool {
 public:
  explicit ThreadPool(unsigned workers = 0) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers_ = workers;
    if (workers_ == 1) return;  // run tasks inline, no threads
    for (unsigned i = 0; i < workers_; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  ~ThreadPool() {
    {
      std::unique_lock<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  unsigned workers() const { return workers_; }

  // Runs fn(block_index) for block_index in [0, n_blocks); blocks execute
  // concurrently, and the call returns once every block has finished.
  void run_blocks(std::size_t n_blocks, const std::function<void(std::size_t)>& fn) {
    if (n_blocks == 0) return;
    if (workers_ == 1 || threads_.empty() || n_blocks == 1) {
      for (std::size_t b = 0; b < n_blocks; ++b) fn(b);
      return;
    }
    std::size_t pending = n_blocks;
    std::mutex done_mu;
    std::condition_variable done_cv;
    {
      std::unique_lock<std::mutex> lk(mu_);
      for (std::size_t b = 0; b < n_blocks; ++b) {
        tasks_.push([&, b] {
          fn(b);
          std::unique_lock<std::mutex> dlk(done_mu);
          if (--pending == 0) done_cv.notify_one();
        });
      }
    }
    cv_.notify_all();
    std::unique_lock<std::mutex> dlk(done_mu);
    done_cv.wait(dlk, [&] { return pending == 0; });
  }

 private:
  void worker_loop() {
    for (;;) {
      std::function<void()> task;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [this] { return stop_ || !tasks_.empty(); });
        if (stop_ && tasks_.empty()) return;
        task = std::move(tasks_.front());
        tasks_.pop();
      }
      task();
    }
  }

  unsigned workers_ = 1;
  std::vector<std::thread> threads_;
  std::queue<std::function<void()>> tasks_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
};

}  // namespace gds

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "protoeval/providers.hpp"

namespace protoeval::providers {

class Clock {
 public:
  using time_point = std::chrono::steady_clock::time_point;
  virtual ~Clock() = default;
  virtual time_point now() = 0;
  virtual void sleep_for(std::chrono::nanoseconds d) = 0;
};

Clock& system_clock();

/// Time advances only through sleep_for. Thread-safe; records every sleep.
class ManualClock final : public Clock {
 public:
  time_point now() override;
  void sleep_for(std::chrono::nanoseconds d) override;
  std::vector<std::chrono::nanoseconds> sleeps() const;

 private:
  mutable std::mutex mu_;
  time_point t_{};
  std::vector<std::chrono::nanoseconds> sleeps_;
};

struct HttpRequest {
  std::string method = "POST";
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  std::chrono::milliseconds timeout{60'000};
};

struct HttpResponse {
  /// 0 when no response arrived; `error` then says why.
  int status = 0;
  std::string body;
  std::map<std::string, std::string> headers;
  std::string error;
  bool timed_out = false;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse send(const HttpRequest& request) = 0;
};

/// HTTP(S) client transport.
std::shared_ptr<Transport> make_http_transport();

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30'000};
};

/// Backoff before retry number `retry` (1-based), before honoring Retry-After.
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry);

/// Sends with retries. 429, 5xx and transport failures are retried with
/// exponential backoff (a Retry-After header, in seconds, takes precedence
/// when longer). 401 and 403 raise AuthError at once; other 4xx raise a
/// non-retryable ProviderError. Never performs more than max_attempts sends.
HttpResponse send_with_retries(Transport& transport, const HttpRequest& request,
                               const RetryPolicy& policy, Clock& clock, const NoticeSink& notice = {});

/// Token bucket: capacity `burst`, refilled at rpm / 60 tokens per second.
class RateLimiter {
 public:
  RateLimiter(double requests_per_minute, double burst, Clock& clock);
  void acquire();

 private:
  std::mutex mu_;
  Clock& clock_;
  double rate_per_sec_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
};

/// Counting gate bounding in-flight requests.
class ConcurrencyGate {
 public:
  explicit ConcurrencyGate(int limit);

  class Permit {
   public:
    explicit Permit(ConcurrencyGate& gate);
    ~Permit();
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    ConcurrencyGate& gate_;
  };

  int in_flight() const;
  int peak() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int limit_;
  int in_flight_ = 0;
  int peak_ = 0;
};

}  // namespace protoeval::providers

#include "protoeval/transport.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <thread>

#include <fmt/format.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "protoeval/error.hpp"

namespace protoeval::providers {
namespace {

class SystemClock final : public Clock {
 public:
  time_point now() override { return std::chrono::steady_clock::now(); }
  void sleep_for(std::chrono::nanoseconds d) override { std::this_thread::sleep_for(d); }
};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/'
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError(fmt::format("malformed URL '{}'", url));
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport final : public Transport {
 public:
  HttpResponse send(const HttpRequest& request) override {
    auto [origin, path] = split_url(request.url);
    httplib::Client client(origin);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
      if (iequals(k, "Content-Type")) {
        content_type = v;
      } else {
        headers.emplace(k, v);
      }
    }

    httplib::Result res = request.method == "GET" ? client.Get(path, headers)
                                                  : client.Post(path, headers, request.body, content_type);
    HttpResponse out;
    if (!res) {
      auto err = res.error();
      out.error = httplib::to_string(err);
      out.timed_out = err == httplib::Error::Read || err == httplib::Error::Write ||
                      err == httplib::Error::ConnectionTimeout;
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    for (const auto& [k, v] : res->headers) out.headers[k] = v;
    return out;
  }
};

std::optional<std::string> header_ci(const std::map<std::string, std::string>& headers, std::string_view name) {
  for (const auto& [k, v] : headers) {
    if (iequals(k, name)) return v;
  }
  return std::nullopt;
}

std::string excerpt(const std::string& body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

}  // namespace

Clock& system_clock() {
  static SystemClock clock;
  return clock;
}

ManualClock::time_point ManualClock::now() {
  std::lock_guard lock(mu_);
  return t_;
}

void ManualClock::sleep_for(std::chrono::nanoseconds d) {
  std::lock_guard lock(mu_);
  sleeps_.push_back(d);
  if (d.count() > 0) t_ += d;
}

std::vector<std::chrono::nanoseconds> ManualClock::sleeps() const {
  std::lock_guard lock(mu_);
  return sleeps_;
}

std::shared_ptr<Transport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry) {
  double ms = static_cast<double>(policy.initial_backoff.count()) * std::pow(policy.multiplier, retry - 1);
  ms = std::min(ms, static_cast<double>(policy.max_backoff.count()));
  return std::chrono::milliseconds(static_cast<long long>(ms));
}

HttpResponse send_with_retries(Transport& transport, const HttpRequest& request, const RetryPolicy& policy,
                               Clock& clock, const NoticeSink& notice) {
  if (policy.max_attempts < 1) throw ConfigError("retry policy needs at least one attempt");
  std::string last_error;
  int last_status = 0;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    HttpResponse resp = transport.send(request);
    if (resp.status >= 200 && resp.status < 300) return resp;
    if (resp.status == 401 || resp.status == 403) {
      throw AuthError(fmt::format("authentication rejected ({}): {}", resp.status, excerpt(resp.body)), resp.status);
    }
    bool retryable = resp.status == 0 || resp.status == 429 || resp.status >= 500;
    if (!retryable) {
      throw ProviderError(fmt::format("request failed ({}): {}", resp.status, excerpt(resp.body)), resp.status, false);
    }
    last_status = resp.status;
    last_error = resp.status == 0 ? (resp.timed_out ? "timeout: " : "transport: ") + resp.error
                                  : fmt::format("status {}: {}", resp.status, excerpt(resp.body));
    if (attempt == policy.max_attempts) break;

    auto delay = backoff_delay(policy, attempt);
    if (auto ra = header_ci(resp.headers, "Retry-After")) {
      try {
        auto secs = std::chrono::milliseconds(static_cast<long long>(std::stod(*ra) * 1000.0));
        delay = std::max(delay, secs);
      } catch (const std::exception&) {
        // HTTP-date form: keep the computed backoff
      }
    }
    if (notice) notice(fmt::format("retry {}/{} after {} ms ({})", attempt, policy.max_attempts - 1, delay.count(),
                                   last_error));
    clock.sleep_for(delay);
  }
  throw ProviderError(fmt::format("giving up after {} attempts: {}", policy.max_attempts, last_error), last_status,
                      true);
}

RateLimiter::RateLimiter(double requests_per_minute, double burst, Clock& clock)
    : clock_(clock), rate_per_sec_(requests_per_minute / 60.0), capacity_(std::max(1.0, burst)), tokens_(capacity_),
      last_(clock.now()) {
  if (!(requests_per_minute > 0)) throw ConfigError("requests_per_minute must be positive");
}

void RateLimiter::acquire() {
  std::unique_lock lock(mu_);
  for (;;) {
    auto now = clock_.now();
    double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_per_sec_);
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    double wait = (1.0 - tokens_) / rate_per_sec_;
    lock.unlock();
    clock_.sleep_for(std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::duration<double>(wait)));
    lock.lock();
  }
}

ConcurrencyGate::ConcurrencyGate(int limit) : limit_(limit) {
  if (limit < 1) throw ConfigError("concurrency limit must be at least 1");
}

ConcurrencyGate::Permit::Permit(ConcurrencyGate& gate) : gate_(gate) {
  std::unique_lock lock(gate_.mu_);
  gate_.cv_.wait(lock, [&] { return gate_.in_flight_ < gate_.limit_; });
  ++gate_.in_flight_;
  gate_.peak_ = std::max(gate_.peak_, gate_.in_flight_);
}

ConcurrencyGate::Permit::~Permit() {
  {
    std::lock_guard lock(gate_.mu_);
    --gate_.in_flight_;
  }
  gate_.cv_.notify_one();
}

int ConcurrencyGate::in_flight() const {
  std::lock_guard lock(mu_);
  return in_flight_;
}

int ConcurrencyGate::peak() const {
  std::lock_guard lock(mu_);
  return peak_;
}

}  // namespace protoeval::providers

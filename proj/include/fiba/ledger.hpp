#pragma once

// Amortized-cost auditing over a stream of OpRecords.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <sstream>
#include <string>

#include "fiba/swag.hpp"

namespace fiba {

/// Observes the records of consecutive operations and checks
///   spent + (phi_after - phi_before) <= per_op_bound    for every op,
///   mean spent <= per_op_bound   over every run of `window` consecutive ops,
/// plus continuity of the potential between operations.
class RebalanceLedger {
 public:
  explicit RebalanceLedger(std::int64_t per_op_bound = 2,
                           std::size_t window = 10000)
      : bound_(per_op_bound), window_(window) {}

  void observe(const OpRecord& r) {
    ++ops_;
    std::int64_t spent = r.spent();
    total_spent_ += spent;
    total_billed_ += r.billed();
    total_refunded_ += r.refunded();
    if (r.net_cost() > max_net_) max_net_ = r.net_cost();
    if (r.net_cost() > bound_ && violations_++ == 0) {
      std::ostringstream os;
      os << "op " << ops_ << ": spent " << spent << " + dphi "
         << r.phi_after - r.phi_before << " exceeds " << bound_;
      first_violation_ = os.str();
    }
    if (have_phi_ && r.phi_before != last_phi_ && violations_++ == 0)
      first_violation_ = "potential changed between operations";
    have_phi_ = true;
    last_phi_ = r.phi_after;

    recent_.push_back(spent);
    window_spent_ += spent;
    if (recent_.size() > window_) {
      window_spent_ -= recent_.front();
      recent_.pop_front();
    }
    if (recent_.size() == window_) {
      double mean = static_cast<double>(window_spent_) /
                    static_cast<double>(window_);
      if (mean > max_window_mean_) max_window_mean_ = mean;
    }
  }

  bool ok() const {
    return violations_ == 0 &&
           max_window_mean_ <= static_cast<double>(bound_);
  }
  std::uint64_t ops() const { return ops_; }
  std::uint64_t violations() const { return violations_; }
  const std::string& first_violation() const { return first_violation_; }
  std::int64_t max_net_cost() const { return max_net_; }
  /// Largest mean spent over a full window; 0 until `window` ops are seen.
  double max_window_mean() const { return max_window_mean_; }
  std::int64_t total_spent() const { return total_spent_; }
  std::int64_t total_billed() const { return total_billed_; }
  std::int64_t total_refunded() const { return total_refunded_; }

 private:
  std::int64_t bound_;
  std::size_t window_;
  std::uint64_t ops_ = 0;
  std::uint64_t violations_ = 0;
  std::string first_violation_;
  std::int64_t max_net_ = 0;
  std::int64_t total_spent_ = 0;
  std::int64_t total_billed_ = 0;
  std::int64_t total_refunded_ = 0;
  bool have_phi_ = false;
  std::int64_t last_phi_ = 0;
  std::deque<std::int64_t> recent_;
  std::int64_t window_spent_ = 0;
  double max_window_mean_ = 0.0;
};

}  // namespace fiba

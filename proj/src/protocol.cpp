#include "flowguard/protocol.hpp"

#include <algorithm>

namespace flowguard::protocol {

const char* state_name(UnitState state) {
    switch (state) {
        case UnitState::normal: return "normal";
        case UnitState::pending: return "pending";
        case UnitState::failed: return "failed";
    }
    return "?";
}

namespace {

// A unit listed in its own visible set means a dependency cycle reported the
// failure back around.  The smallest id in the set goes first.
std::set<int> apply_cycle_rule(std::set<int> view, int self) {
    if (view.count(self)) {
        if (*view.begin() == self) return {};
        view.erase(self);
    }
    return view;
}

}  // namespace

UnitProtocol::UnitProtocol(int id, std::vector<int> upstream,
                           std::vector<int> downstream, ProtocolConfig config)
    : id_(id),
      upstream_(std::move(upstream)),
      downstream_(std::move(downstream)),
      config_(config) {
    std::sort(upstream_.begin(), upstream_.end());
    std::sort(downstream_.begin(), downstream_.end());
}

wire::Beacon UnitProtocol::make_beacon(std::int64_t now) {
    wire::Beacon beacon;
    beacon.header.seq = next_seq_++;
    beacon.header.timestamp_ms = now;
    beacon.header.type = wire::MsgType::unit;
    beacon.source_id = id_;
    beacon.sick_bit = sick_;
    auto known = known_failures();
    beacon.failure_queue.assign(known.begin(), known.end());
    return beacon;
}

void UnitProtocol::broadcast(StepResult& result, std::int64_t now) {
    for (int target : downstream_)
        result.emissions.push_back({target, make_beacon(now)});
    last_beacon_ms_ = now;
    beaconed_ = true;
}

void UnitProtocol::send_status_requests(StepResult& result, std::int64_t now,
                                        const std::vector<int>& targets) {
    for (int target : targets) {
        wire::StatusRequest request;
        request.header.seq = next_seq_++;
        request.header.timestamp_ms = now;
        request.header.type = wire::MsgType::status_req;
        request.source_id = id_;
        request.sick_bit = sick_;
        auto known = known_failures();
        request.failure_queue.assign(known.begin(), known.end());
        request.target_id = target;
        result.emissions.push_back({target, request});
        requested_at_[target] = now;
    }
}

std::set<int> UnitProtocol::confirmed_view(bool epoch_only) const {
    std::set<int> view;
    for (int u : upstream_) {
        auto it = stored_.find(u);
        if (it == stored_.end()) continue;
        if (epoch_only && it->second.received_ms < pending_since_) continue;
        if (it->second.sick_bit) view.insert(u);
        for (int f : it->second.failure_queue) view.insert(f);
    }
    return view;
}

std::set<int> UnitProtocol::visible_failures() const {
    std::set<int> view;
    for (int u : upstream_) {
        auto it = stored_.find(u);
        bool answered = it != stored_.end() &&
                        (state_ != UnitState::pending ||
                         it->second.received_ms >= pending_since_);
        if (!answered) {
            view.insert(u);  // silence is assumed to be failure
            continue;
        }
        if (it->second.sick_bit) view.insert(u);
        for (int f : it->second.failure_queue) view.insert(f);
    }
    return apply_cycle_rule(std::move(view), id_);
}

std::set<int> UnitProtocol::known_failures() const {
    auto view = confirmed_view(false);
    view.erase(id_);
    return view;
}

void UnitProtocol::refresh_visibility(std::int64_t now) {
    if (state_ != UnitState::pending) return;
    auto confirmed = apply_cycle_rule(confirmed_view(false), id_);
    if (!confirmed.empty()) {
        saw_confirmed_failure_ = true;
        emptied_stamped_ = false;
    } else if (saw_confirmed_failure_ && !emptied_stamped_) {
        emptied_at_ = now;
        emptied_stamped_ = true;
    }
}

void UnitProtocol::leave_pending() {
    pending_since_ = -1;
    requested_at_.clear();
    saw_confirmed_failure_ = false;
    emptied_stamped_ = false;
}

StepResult UnitProtocol::on_analysis(bool voted_anomalous, std::int64_t now) {
    StepResult result;
    if (state_ == UnitState::failed) return result;

    if (state_ == UnitState::normal && voted_anomalous) {
        state_ = UnitState::pending;
        sick_ = 1;
        pending_since_ = now;
        saw_confirmed_failure_ = false;
        emptied_stamped_ = false;
        result.transitions.push_back({UnitState::normal, UnitState::pending, now});
        broadcast(result, now);
        send_status_requests(result, now, upstream_);
        refresh_visibility(now);
    } else if (state_ == UnitState::pending && !voted_anomalous) {
        sick_ = 0;
        result.transitions.push_back({UnitState::pending, UnitState::normal, now});
        broadcast(result, now);  // all-clear
        state_ = UnitState::normal;
        leave_pending();
    } else if (state_ == UnitState::pending && voted_anomalous) {
        sick_ = 1;
        refresh_visibility(now);
    }
    return result;
}

StepResult UnitProtocol::on_beacon(const wire::Beacon& beacon,
                                   std::int64_t now) {
    StepResult result;
    if (beacon.source_id == id_) return result;
    auto it = stored_.find(beacon.source_id);
    if (it != stored_.end() && beacon.header.seq <= it->second.seq)
        return result;  // out of order, keep the newer picture
    stored_[beacon.source_id] = StoredBeacon{beacon.header.seq, now,
                                             beacon.sick_bit,
                                             beacon.failure_queue};
    refresh_visibility(now);
    return result;
}

StepResult UnitProtocol::on_status_request(const wire::StatusRequest& request,
                                           std::int64_t now) {
    StepResult result;
    result.emissions.push_back({request.source_id, make_beacon(now)});
    return result;
}

StepResult UnitProtocol::tick(std::int64_t now) {
    StepResult result;
    if (state_ == UnitState::pending || state_ == UnitState::failed) {
        if (!beaconed_ || now - last_beacon_ms_ >= config_.beacon_period_ms)
            broadcast(result, now);
    }
    if (state_ == UnitState::pending) {
        std::vector<int> asks;
        std::int64_t patience =
            config_.status_timeout_periods * config_.beacon_period_ms;
        for (int u : upstream_) {
            auto it = stored_.find(u);
            // Fresh means heard from within the patience window during this
            // epoch.  A sick upstream beacons periodically, so silence after
            // a sick answer hints at a lost all-clear and is worth a re-ask.
            bool fresh = it != stored_.end() &&
                         it->second.received_ms >= pending_since_ &&
                         (it->second.sick_bit == 0 ||
                          now - it->second.received_ms < patience);
            if (fresh) continue;
            auto rit = requested_at_.find(u);
            if (rit == requested_at_.end() || now - rit->second >= patience)
                asks.push_back(u);
        }
        if (!asks.empty()) send_status_requests(result, now, asks);
        refresh_visibility(now);
    }
    return result;
}

bool UnitProtocol::try_mitigate(std::int64_t now) {
    (void)now;
    if (state_ != UnitState::pending || !sick_) return false;
    if (!visible_failures().empty()) return false;
    state_ = UnitState::failed;
    ++mitigation_count_;
    return true;
}

bool UnitProtocol::mitigation_ripe(std::int64_t now) const {
    if (state_ != UnitState::pending) return false;
    if (now < pending_since_ + config_.assertion_window_ms) return false;
    if (!saw_confirmed_failure_) return true;
    return emptied_stamped_ && now >= emptied_at_ + config_.washout_window_ms;
}

StepResult UnitProtocol::on_mitigation_complete(std::int64_t now) {
    StepResult result;
    if (state_ != UnitState::failed) return result;
    sick_ = 0;
    result.transitions.push_back({UnitState::failed, UnitState::normal, now});
    broadcast(result, now);  // all-clear
    state_ = UnitState::normal;
    leave_pending();
    return result;
}

StepResult UnitProtocol::on_global_restart(std::int64_t now) {
    StepResult result;
    if (state_ != UnitState::normal)
        result.transitions.push_back({state_, UnitState::normal, now});
    state_ = UnitState::normal;
    sick_ = 0;
    stored_.clear();
    leave_pending();
    mitigation_count_ = 0;
    beaconed_ = false;
    return result;
}

std::optional<StoredBeacon> UnitProtocol::stored_beacon(int source) const {
    auto it = stored_.find(source);
    if (it == stored_.end()) return std::nullopt;
    return it->second;
}

}  // namespace flowguard::protocol

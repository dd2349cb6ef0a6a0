#pragma once

// Cooperative failure localization.  Each unit runs one instance of this
// state machine next to its monitors.  A unit that turns anomalous becomes
// pending, announces itself downstream and interrogates its upstreams; it
// only mitigates once no upstream failure is visible any more, so recovery
// proceeds from the root causes outward and affected units simply wait for
// the corruption to wash through.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "flowguard/wire.hpp"

namespace flowguard::protocol {

enum class UnitState { normal, pending, failed };

const char* state_name(UnitState state);

struct ProtocolConfig {
    std::int64_t beacon_period_ms = 100;
    // A silent upstream is asked again after this many beacon periods.
    int status_timeout_periods = 3;
    // Minimum pending time before mitigation, so upstream assertions can
    // arrive and be weighed.
    std::int64_t assertion_window_ms = 300;
    // Extra wait after the visible failure set empties; long enough for
    // leftover upstream corruption to wash through and clear the unit
    // without a needless mitigation.
    std::int64_t washout_window_ms = 200;
};

struct StoredBeacon {
    std::uint64_t seq = 0;
    std::int64_t received_ms = 0;
    int sick_bit = 0;
    std::vector<int> failure_queue;
};

struct Emission {
    int target_unit = 0;
    wire::Message message;
};

struct Transition {
    UnitState from = UnitState::normal;
    UnitState to = UnitState::normal;
    std::int64_t at_ms = 0;
};

struct StepResult {
    std::vector<Emission> emissions;
    std::vector<Transition> transitions;
};

class UnitProtocol {
public:
    UnitProtocol(int id, std::vector<int> upstream, std::vector<int> downstream,
                 ProtocolConfig config);

    // Voted detector verdict for the window ending at now.  Turning
    // anomalous makes the unit pending (beacon downstream, interrogate
    // upstream); a pending unit whose verdict clears returns to normal with
    // an all-clear beacon.  Ignored while failed, mitigation is in progress.
    StepResult on_analysis(bool voted_anomalous, std::int64_t now);

    // Latest-wins beacon ingestion; stale sequence numbers are dropped.
    StepResult on_beacon(const wire::Beacon& beacon, std::int64_t now);

    // Always answered immediately with this unit's current status.
    StepResult on_status_request(const wire::StatusRequest& request,
                                 std::int64_t now);

    // Periodic work: beacons while pending or failed, repeat status
    // requests to upstreams that have stayed silent.
    StepResult tick(std::int64_t now);

    // Mitigation is allowed only for a sick unit with no visible upstream
    // failure.  On success the unit is failed and the caller owns recovery.
    bool try_mitigate(std::int64_t now);

    // Whether enough wall time has passed for a mitigation decision: the
    // assertion window since turning pending, plus the washout window since
    // the visible failure set last became empty.
    bool mitigation_ripe(std::int64_t now) const;

    StepResult on_mitigation_complete(std::int64_t now);

    // System-wide reboot landed: back to a clean slate.
    StepResult on_global_restart(std::int64_t now);

    // Failures this unit currently has to assume exist upstream.  Upstreams
    // that never answered count as failed until proven healthy.  When the
    // unit finds itself inside the reported set, a dependency cycle has
    // closed; the member with the smallest id proceeds as if the set were
    // empty so the cycle cannot deadlock.
    std::set<int> visible_failures() const;

    // Confirmed upstream failures only; this is what beacons advertise.
    std::set<int> known_failures() const;

    int id() const { return id_; }
    UnitState state() const { return state_; }
    int sick() const { return sick_; }
    int mitigation_count() const { return mitigation_count_; }
    std::int64_t pending_since() const { return pending_since_; }
    std::optional<StoredBeacon> stored_beacon(int source) const;

    std::uint64_t next_seq() const { return next_seq_; }
    void advance_seq(std::uint64_t count) { next_seq_ += count; }

private:
    wire::Beacon make_beacon(std::int64_t now);
    void broadcast(StepResult& result, std::int64_t now);
    void send_status_requests(StepResult& result, std::int64_t now,
                              const std::vector<int>& targets);
    std::set<int> confirmed_view(bool epoch_only) const;
    void refresh_visibility(std::int64_t now);
    void leave_pending();

    int id_;
    std::vector<int> upstream_;
    std::vector<int> downstream_;
    ProtocolConfig config_;

    UnitState state_ = UnitState::normal;
    int sick_ = 0;
    std::uint64_t next_seq_ = 1;
    std::int64_t pending_since_ = -1;
    std::int64_t last_beacon_ms_ = 0;
    bool beaconed_ = false;
    int mitigation_count_ = 0;

    std::map<int, StoredBeacon> stored_;
    std::map<int, std::int64_t> requested_at_;

    // Washout bookkeeping over the confirmed view.
    bool saw_confirmed_failure_ = false;
    bool emptied_stamped_ = false;
    std::int64_t emptied_at_ = 0;
};

}  // namespace flowguard::protocol

#pragma once

#include "pktsig/ingest.hpp"
#include "pktsig/signature.hpp"
#include "pktsig/types.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace pktsig {

enum class SnifferMode { Wan, Wifi };

const char* sniffer_mode_name(SnifferMode m);

struct EventLog; // events.hpp

// What a packet does to one state machine.
enum class AdvanceResult { Advanced, Completed, Ignored, Reset };

// One partial match of a single packet sequence on one flow.
struct SequenceMachine {
    int set_index{0};
    int state{0}; // positions matched so far
    std::vector<PacketMeta> recorded;

    Micros first_ts() const { return recorded.empty() ? 0 : recorded.front().ts_us; }
    Micros last_ts() const { return recorded.empty() ? 0 : recorded.back().ts_us; }
};

// Advances `machine` with `packet` under the given bounds. Non-matching
// packets reset the machine at layer 3 (Wan) and are ignored at layer 2
// (Wifi). The caller routes only packets of the machine's flow here.
AdvanceResult advance(SequenceMachine& machine, const PacketMeta& packet, SnifferMode mode,
                      const MatchBounds& bounds);

// Completed packet sequence, handed to the match assembler.
struct SequenceCompletion {
    int set_index{0};
    std::vector<PacketMeta> recorded;
    FlowKey flow{};
    Micros first_ts() const { return recorded.front().ts_us; }
    Micros last_ts() const { return recorded.back().ts_us; }
};

// Pool of machines for one (flow, signature set): at most one machine per
// state plus the implicit empty machine. Feeding a packet applies the
// spawn-on-first-match and latest-packet replacement rules; a completion
// consumes its packets, discarding partial matches that recorded any of
// them. Partials older than the detection window expire: they could only
// complete into a span the window forbids.
class MachinePool {
public:
    MachinePool(int set_index, int sequence_len, const FlowKey& flow, Micros window_us)
        : set_index_(set_index), len_(sequence_len), flow_(flow), window_us_(window_us),
          slots_(sequence_len) {}

    // Returns the completion if this packet finished the sequence.
    std::optional<SequenceCompletion> feed(const PacketMeta& packet, SnifferMode mode,
                                           const MatchBounds& bounds);

    int active_machines() const;

private:
    int set_index_;
    int len_;
    FlowKey flow_;
    Micros window_us_;
    std::vector<std::optional<SequenceMachine>> slots_; // index = state; [0] unused
};

struct MatchEvent {
    std::string signature_id;
    std::string label;
    Micros first_ts{0};
    Micros last_ts{0};
    std::vector<std::vector<std::uint32_t>> packet_indices; // per set, parse-order ids
    std::vector<FlowKey> flows;
};

// Combines per-set completions into full signature matches: one completion
// per set, set i strictly before set i+1, total span within the detection
// window. Completions are single-use and expire after the window.
class MatchAssembler {
public:
    MatchAssembler(const Signature& sig, std::int64_t window_ms)
        : sig_(&sig), window_us_(window_ms * 1000),
          pending_(sig.sets.empty() ? 0 : sig.sets.size()) {}

    std::optional<MatchEvent> offer(const SequenceCompletion& completion);

private:
    const Signature* sig_;
    Micros window_us_;
    std::vector<std::vector<SequenceCompletion>> pending_;
};

struct DetectOptions {
    SnifferMode mode{SnifferMode::Wan};
    MatchStrategy strategy{MatchStrategy::Exact};
    bool auto_strategy{false}; // range when trained variation allows, else exact
    double eps{10.0};
    int delta{0};
    std::vector<int> delta_positions; // empty with Relaxed = all positions
    std::optional<int> layer2_offset; // overrides the signature's trained offset
};

struct SignatureTally {
    std::string signature_id;
    std::string label;
    int matches{0};
    int true_positives{0};
    int false_positives{0};
    int expected_events{0};
};

struct DetectReport {
    std::vector<MatchEvent> matches; // ordered by first ts, then signature id
    std::vector<SignatureTally> tallies;
};

MatchBounds bounds_for(const Signature& sig, const DetectOptions& opt,
                       const std::vector<Signature>& all_sigs);

// Runs every signature's state machines over the capture. Wan mode reassembles
// TCP connections and streams each connection's payload packets; Wifi mode
// streams per layer-2 flow with frame lengths (synthesized from layer-3
// payloads via the signature's layer-2 offset when the capture is layer 3).
// With `truth` supplied, tallies recall and false positives per label.
DetectReport detect(const Capture& capture, const std::vector<Signature>& signatures,
                    const DetectOptions& options, const EventLog* truth = nullptr,
                    double truth_window_s = 15.0);

// Low-level single-flow run used by detect() and the defense simulator.
std::vector<SequenceCompletion> run_sequence_machines(std::span<const PacketMeta> flow_packets,
                                                      int set_index, SnifferMode mode,
                                                      const MatchBounds& bounds,
                                                      const FlowKey& flow, Micros window_us);

} // namespace pktsig

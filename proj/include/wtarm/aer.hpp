#pragma once

// Address-event wire path: two-word spike framing on the chip's output
// port, 4-phase REQ/ACK handshake, the decoder FSM on the receiving board,
// and the nibble-serial link between the two controller boards.
//
// Port word layout (13 data lines):
//   word0 (tag)     bits[12:11] core index, bits[10:0] reserved, zero
//   word1 (address) bits[9:0] neuron index within the chip, bits[12:10] zero

#include <array>
#include <cstdint>
#include <deque>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "wtarm/types.hpp"

namespace wtarm::aer {

inline constexpr int kPayloadBits = 13;
inline constexpr std::uint16_t kPayloadMask = (1u << kPayloadBits) - 1;
inline constexpr std::uint16_t kCoreShift = 11;
inline constexpr std::uint16_t kTagReservedMask = (1u << kCoreShift) - 1;
inline constexpr std::uint16_t kNeuronMask = 0x3ff;

class AerWord
{
public:
    constexpr AerWord() = default;
    constexpr explicit AerWord(std::uint16_t payload) : payload_(payload)
    {
        if (payload > kPayloadMask)
            throw ValidationError("AER payload exceeds 13 bits");
    }
    constexpr std::uint16_t payload() const { return payload_; }
    friend constexpr bool operator==(AerWord, AerWord) = default;

private:
    std::uint16_t payload_{0};
};

struct SpikeFrame
{
    AerWord word0;
    AerWord word1;
    friend bool operator==(const SpikeFrame&, const SpikeFrame&) = default;
};

inline SpikeFrame encode_spike(NeuronId neuron_id)
{
    if (neuron_id >= kMaxNeurons)
        throw ValidationError("neuron id " + std::to_string(neuron_id) + " out of range");
    const auto core = static_cast<std::uint16_t>(neuron_id / kNeuronsPerCore);
    return {AerWord(static_cast<std::uint16_t>(core << kCoreShift)), AerWord(static_cast<std::uint16_t>(neuron_id))};
}

inline SpikeFrame encode_spike(const SpikeEvent& e) { return encode_spike(e.neuron_id); }

inline bool is_valid_tag(AerWord w) { return (w.payload() & kTagReservedMask) == 0; }
inline bool is_valid_address(AerWord w) { return (w.payload() & ~kNeuronMask & kPayloadMask) == 0; }

/// Recovers neuron ids from the two-word stream. A word that violates the
/// layout drops any held tag; a valid tag arriving where an address was
/// expected restarts the frame from that word.
class DecoderFsm
{
public:
    enum class State : std::uint8_t { AwaitWord0, AwaitWord1 };

    struct Result
    {
        std::optional<NeuronId> neuron_id;
        bool resync{false};
    };

    State state() const { return state_; }
    std::uint64_t resync_count() const { return resyncs_; }

    Result step(AerWord w)
    {
        if (state_ == State::AwaitWord0) {
            if (!is_valid_tag(w)) {
                ++resyncs_;
                return {std::nullopt, true};
            }
            held_ = w;
            state_ = State::AwaitWord1;
            return {};
        }
        const auto core = static_cast<std::uint16_t>(held_.payload() >> kCoreShift);
        if (is_valid_address(w) && (w.payload() / kNeuronsPerCore) == core) {
            state_ = State::AwaitWord0;
            return {static_cast<NeuronId>(w.payload()), false};
        }
        ++resyncs_;
        if (is_valid_tag(w)) {
            held_ = w;
            return {std::nullopt, true};
        }
        state_ = State::AwaitWord0;
        return {std::nullopt, true};
    }

private:
    State state_{State::AwaitWord0};
    AerWord held_{};
    std::uint64_t resyncs_{0};
};

/// Convenience: decode a whole word stream.
inline std::vector<NeuronId> decode_stream(std::span<const AerWord> words)
{
    DecoderFsm fsm;
    std::vector<NeuronId> out;
    for (auto w : words)
        if (auto r = fsm.step(w); r.neuron_id)
            out.push_back(*r.neuron_id);
    return out;
}

/// Nanosecond time used inside the handshake model; events leaving the
/// link are stamped in whole microseconds.
using Nanos = std::int64_t;

inline Micros ns_to_us_ceil(Nanos ns) { return (ns + 999) / 1000; }

struct HandshakeTiming
{
    double req_latency_us{0.5};
    double ack_latency_us{0.5};
    double timeout_us{100.0};

    Nanos req_ns() const { return static_cast<Nanos>(req_latency_us * 1000.0 + 0.5); }
    Nanos ack_ns() const { return static_cast<Nanos>(ack_latency_us * 1000.0 + 0.5); }
    Nanos timeout_ns() const { return static_cast<Nanos>(timeout_us * 1000.0 + 0.5); }
    // Full 4-phase cycle: REQ up, ACK up, REQ down, ACK down.
    Nanos round_trip_ns() const { return 2 * (req_ns() + ack_ns()); }
};

/// 4-phase asynchronous handshake. The receiver latches the word when ACK
/// rises; the link is free again after the return-to-zero phases.
class HandshakeLink
{
public:
    enum class State : std::uint8_t { Idle, ReqAsserted, Acked };

    struct Delivery
    {
        bool delivered{false};
        Nanos t_deliver{0};
        Nanos t_idle{0};
    };

    explicit HandshakeLink(HandshakeTiming timing = {}) : timing_(timing) {}

    State state() const { return state_; }
    const HandshakeTiming& timing() const { return timing_; }
    Nanos busy_until() const { return busy_until_; }
    std::uint64_t error_count() const { return errors_; }

    void assert_req()
    {
        if (state_ != State::Idle)
            throw ValidationError("handshake: REQ asserted while not idle");
        state_ = State::ReqAsserted;
    }
    void acknowledge()
    {
        if (state_ != State::ReqAsserted)
            throw ValidationError("handshake: ACK without pending REQ");
        state_ = State::Acked;
    }
    void release()
    {
        if (state_ != State::Acked)
            throw ValidationError("handshake: release before ACK");
        state_ = State::Idle;
    }

    /// Send one word that becomes ready at `t_ready`. Words wait for the
    /// previous cycle to finish, so order is preserved. If the receiver's
    /// ACK latency exceeds the timeout the word is dropped and the link
    /// resets to Idle.
    Delivery transfer(Nanos t_ready, std::optional<Nanos> ack_override = std::nullopt)
    {
        const Nanos start = std::max(t_ready, busy_until_);
        const Nanos ack = ack_override.value_or(timing_.ack_ns());
        assert_req();
        if (ack > timing_.timeout_ns()) {
            ++errors_;
            state_ = State::Idle;
            busy_until_ = start + timing_.req_ns() + timing_.timeout_ns();
            return {false, 0, busy_until_};
        }
        acknowledge();
        const Nanos t_deliver = start + timing_.req_ns() + ack;
        release();
        busy_until_ = t_deliver + timing_.req_ns() + ack;
        return {true, t_deliver, busy_until_};
    }

private:
    HandshakeTiming timing_;
    State state_{State::Idle};
    Nanos busy_until_{0};
    std::uint64_t errors_{0};
};

// Nibble-serial inter-board link: 4 data lines, most significant nibble
// first, REQ/ACK per nibble.

using Nibbles = std::array<std::uint8_t, 4>;

inline Nibbles nibble_serialize(std::uint16_t word)
{
    return {static_cast<std::uint8_t>((word >> 12) & 0xf), static_cast<std::uint8_t>((word >> 8) & 0xf),
            static_cast<std::uint8_t>((word >> 4) & 0xf), static_cast<std::uint8_t>(word & 0xf)};
}

inline std::uint16_t nibble_deserialize(std::span<const std::uint8_t> nibbles)
{
    if (nibbles.size() < 4)
        throw ValidationError("nibble link: short read (" + std::to_string(nibbles.size()) + " of 4 nibbles)");
    std::uint16_t w = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        if (nibbles[i] > 0xf)
            throw ValidationError("nibble link: value exceeds 4 bits");
        w = static_cast<std::uint16_t>((w << 4) | nibbles[i]);
    }
    return w;
}

/// Receiving side of the nibble link. A partial word older than the
/// timeout is discarded as a framing error.
class NibbleReceiver
{
public:
    explicit NibbleReceiver(Micros timeout_us = 100) : timeout_(timeout_us) {}

    std::optional<std::uint16_t> push(std::uint8_t nibble, Micros t)
    {
        if (count_ > 0 && t - first_t_ > timeout_) {
            ++framing_errors_;
            count_ = 0;
        }
        if (count_ == 0)
            first_t_ = t;
        buf_[count_++] = nibble;
        if (count_ < 4)
            return std::nullopt;
        count_ = 0;
        return nibble_deserialize(buf_);
    }

    std::uint64_t framing_errors() const { return framing_errors_; }
    std::size_t pending() const { return count_; }

private:
    Micros timeout_;
    Nibbles buf_{};
    std::size_t count_{0};
    Micros first_t_{0};
    std::uint64_t framing_errors_{0};
};

// Fault-injection schedule: CSV `word_index,action,payload_hex` with action
// one of insert (before the indexed word), replace, drop.

enum class FaultAction : std::uint8_t { insert, replace, drop };

struct Fault
{
    std::size_t word_index{0};
    FaultAction action{FaultAction::insert};
    std::uint16_t payload{0};
};

inline std::vector<Fault> parse_fault_schedule(std::istream& is)
{
    std::vector<Fault> faults;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#' || line.rfind("word_index", 0) == 0)
            continue;
        std::stringstream ss(line);
        std::string idx, action, payload;
        if (!std::getline(ss, idx, ',') || !std::getline(ss, action, ','))
            throw ValidationError("fault schedule line " + std::to_string(lineno) + ": expected 3 fields");
        std::getline(ss, payload, ',');
        Fault f;
        try {
            f.word_index = std::stoul(idx);
            f.payload = payload.empty() ? 0 : static_cast<std::uint16_t>(std::stoul(payload, nullptr, 16));
        } catch (const std::exception&) {
            throw ValidationError("fault schedule line " + std::to_string(lineno) + ": bad number");
        }
        if (action == "insert")
            f.action = FaultAction::insert;
        else if (action == "replace")
            f.action = FaultAction::replace;
        else if (action == "drop")
            f.action = FaultAction::drop;
        else
            throw ValidationError("fault schedule line " + std::to_string(lineno) + ": unknown action '" + action + "'");
        if (f.payload > kPayloadMask)
            throw ValidationError("fault schedule line " + std::to_string(lineno) + ": payload exceeds 13 bits");
        faults.push_back(f);
    }
    return faults;
}

/// Apply faults to a clean word stream. Indices refer to the clean stream.
inline std::vector<AerWord> apply_faults(std::span<const AerWord> words, std::span<const Fault> faults)
{
    std::vector<AerWord> out;
    out.reserve(words.size() + faults.size());
    for (std::size_t i = 0; i <= words.size(); ++i) {
        bool keep = i < words.size();
        AerWord w = keep ? words[i] : AerWord{};
        for (const auto& f : faults) {
            if (f.word_index != i)
                continue;
            switch (f.action) {
            case FaultAction::insert:
                out.emplace_back(f.payload);
                break;
            case FaultAction::replace:
                w = AerWord(f.payload);
                break;
            case FaultAction::drop:
                keep = false;
                break;
            }
        }
        if (keep)
            out.push_back(w);
    }
    return out;
}

/// Debug dump of link traffic: `t_us,direction,payload_hex`.
class WireTap
{
public:
    void record(Micros t, std::string_view direction, std::uint16_t payload)
    {
        rows_.push_back({t, std::string(direction), payload});
    }

    void write_csv(std::ostream& os) const
    {
        os << "t_us,direction,payload_hex\n";
        static constexpr char kHex[] = "0123456789abcdef";
        for (const auto& r : rows_) {
            os << r.t << ',' << r.direction << ",0x";
            for (int shift = 12; shift >= 0; shift -= 4)
                os << kHex[(r.payload >> shift) & 0xf];
            os << '\n';
        }
    }

    std::size_t size() const { return rows_.size(); }

private:
    struct Row
    {
        Micros t;
        std::string direction;
        std::uint16_t payload;
    };
    std::vector<Row> rows_;
};

} // namespace wtarm::aer

#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "wtarm/aer.hpp"
#include "wtarm/rng.hpp"

using namespace wtarm;
using namespace wtarm::aer;

namespace {

std::vector<AerWord> frames_of(const std::vector<NeuronId>& ids)
{
    std::vector<AerWord> words;
    for (auto id : ids) {
        const auto f = encode_spike(id);
        words.push_back(f.word0);
        words.push_back(f.word1);
    }
    return words;
}

} // namespace

TEST(AerWord, PayloadIsThirteenBits)
{
    EXPECT_NO_THROW(AerWord(0x1fff));
    EXPECT_THROW(AerWord(0x2000), ValidationError);
}

TEST(EncodeSpike, WordLayout)
{
    const auto f = encode_spike(NeuronId{700});
    EXPECT_EQ(f.word0.payload(), 2u << 11);
    EXPECT_EQ(f.word1.payload(), 700u);
    EXPECT_EQ(encode_spike(SpikeEvent{5, 700}), f);
    EXPECT_THROW(encode_spike(NeuronId{1024}), ValidationError);
}

TEST(EncodeSpike, RoundTripsEveryNeuronId)
{
    std::vector<NeuronId> ids(kMaxNeurons);
    for (NeuronId i = 0; i < kMaxNeurons; ++i)
        ids[i] = i;
    EXPECT_EQ(decode_stream(frames_of(ids)), ids);
}

TEST(DecoderFsm, EmitsOnePerFrameAndCountsResyncs)
{
    DecoderFsm fsm;
    EXPECT_EQ(fsm.state(), DecoderFsm::State::AwaitWord0);
    const auto f = encode_spike(NeuronId{300});
    EXPECT_FALSE(fsm.step(f.word0).neuron_id);
    EXPECT_EQ(fsm.state(), DecoderFsm::State::AwaitWord1);
    EXPECT_EQ(fsm.step(f.word1).neuron_id, 300u);
    EXPECT_EQ(fsm.resync_count(), 0u);
    // An address word where a tag is expected is dropped.
    EXPECT_TRUE(fsm.step(AerWord(0x155)).resync);
    EXPECT_EQ(fsm.resync_count(), 1u);
}

TEST(DecoderFsm, CoreMismatchIsRejected)
{
    DecoderFsm fsm;
    fsm.step(AerWord(1u << 11));
    const auto r = fsm.step(AerWord(5));
    EXPECT_FALSE(r.neuron_id);
    EXPECT_TRUE(r.resync);
}

TEST(DecoderFsm, ResyncsWithinTwoFramesAfterSingleWordFault)
{
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<NeuronId> ids(40);
        for (auto& id : ids)
            id = static_cast<NeuronId>(rng.below(kMaxNeurons));
        const auto clean = frames_of(ids);
        Fault fault;
        fault.word_index = rng.below(clean.size());
        fault.action = static_cast<FaultAction>(rng.below(3));
        fault.payload = static_cast<std::uint16_t>(rng.below(kPayloadMask + 1));
        const auto dirty = apply_faults(clean, std::span(&fault, 1));
        const auto got = decode_stream(dirty);

        const std::size_t frame = fault.word_index / 2;
        ASSERT_GE(got.size(), frame) << "trial " << trial;
        for (std::size_t i = 0; i < frame; ++i)
            ASSERT_EQ(got[i], ids[i]) << "trial " << trial;
        const std::size_t tail = ids.size() - std::min(ids.size(), frame + 2);
        ASSERT_GE(got.size(), tail);
        for (std::size_t i = 0; i < tail; ++i)
            ASSERT_EQ(got[got.size() - 1 - i], ids[ids.size() - 1 - i]) << "trial " << trial;
        EXPECT_LE(oracle::levenshtein<NeuronId>(got, ids), 3u) << "trial " << trial;
    }
}

TEST(Faults, ApplyMatchesDescription)
{
    const std::vector<AerWord> words{AerWord(1), AerWord(2), AerWord(3)};
    const std::vector<Fault> faults{{0, FaultAction::insert, 9}, {1, FaultAction::replace, 7}, {2, FaultAction::drop, 0}};
    const auto out = apply_faults(words, faults);
    const std::vector<AerWord> expected{AerWord(9), AerWord(1), AerWord(7)};
    EXPECT_EQ(out, expected);
}

TEST(Faults, ParseSchedule)
{
    std::istringstream in("word_index,action,payload_hex\n# comment\n3,insert,1abc\n5,drop,\n7,replace,0800\n");
    const auto f = parse_fault_schedule(in);
    ASSERT_EQ(f.size(), 3u);
    EXPECT_EQ(f[0].word_index, 3u);
    EXPECT_EQ(f[0].action, FaultAction::insert);
    EXPECT_EQ(f[0].payload, 0x1abc);
    EXPECT_EQ(f[1].action, FaultAction::drop);
    EXPECT_EQ(f[2].payload, 0x800);

    std::istringstream bad_action("1,flip,00\n");
    EXPECT_THROW(parse_fault_schedule(bad_action), ValidationError);
    std::istringstream too_wide("1,insert,2000\n");
    EXPECT_THROW(parse_fault_schedule(too_wide), ValidationError);
    std::istringstream bad_number("x,insert,10\n");
    EXPECT_THROW(parse_fault_schedule(bad_number), ValidationError);
}

TEST(HandshakeLink, LegalCycleOnly)
{
    HandshakeLink link;
    EXPECT_THROW(link.acknowledge(), ValidationError);
    EXPECT_THROW(link.release(), ValidationError);
    link.assert_req();
    EXPECT_EQ(link.state(), HandshakeLink::State::ReqAsserted);
    EXPECT_THROW(link.assert_req(), ValidationError);
    link.acknowledge();
    EXPECT_EQ(link.state(), HandshakeLink::State::Acked);
    link.release();
    EXPECT_EQ(link.state(), HandshakeLink::State::Idle);
}

TEST(HandshakeLink, TimingOfBackToBackWords)
{
    HandshakeTiming t;
    EXPECT_EQ(t.round_trip_ns(), 2000);
    HandshakeLink link(t);
    const auto a = link.transfer(10'000);
    EXPECT_TRUE(a.delivered);
    EXPECT_EQ(a.t_deliver, 11'000);
    EXPECT_EQ(a.t_idle, 12'000);
    // Second word queued behind the first.
    const auto b = link.transfer(10'000);
    EXPECT_EQ(b.t_deliver, 13'000);
    EXPECT_EQ(ns_to_us_ceil(b.t_deliver), 13);
    EXPECT_EQ(link.state(), HandshakeLink::State::Idle);
}

TEST(HandshakeLink, SlowAckTimesOutAndDropsTheWord)
{
    HandshakeLink link;
    const auto d = link.transfer(0, Nanos{150'000});
    EXPECT_FALSE(d.delivered);
    EXPECT_EQ(link.error_count(), 1u);
    EXPECT_EQ(link.state(), HandshakeLink::State::Idle);
    EXPECT_TRUE(link.transfer(0).delivered);
}

TEST(NibbleLink, MostSignificantNibbleFirst)
{
    const Nibbles n = nibble_serialize(0xa5c3);
    EXPECT_EQ(n, (Nibbles{0xa, 0x5, 0xc, 0x3}));
}

TEST(NibbleLink, RoundTripsRandomWords)
{
    Rng rng(77);
    NibbleReceiver rx;
    for (int i = 0; i < 10000; ++i) {
        const auto w = static_cast<std::uint16_t>(rng.below(65536));
        const auto n = nibble_serialize(w);
        ASSERT_EQ(nibble_deserialize(n), w);
        std::optional<std::uint16_t> got;
        for (auto x : n)
            got = rx.push(x, i);
        ASSERT_EQ(got, w);
    }
    EXPECT_EQ(rx.framing_errors(), 0u);
}

TEST(NibbleLink, ShortReadThrows)
{
    const std::vector<std::uint8_t> three{1, 2, 3};
    EXPECT_THROW(nibble_deserialize(three), ValidationError);
    const std::vector<std::uint8_t> wide{1, 2, 3, 16};
    EXPECT_THROW(nibble_deserialize(wide), ValidationError);
}

TEST(NibbleLink, StaleFragmentIsAFramingError)
{
    NibbleReceiver rx(100);
    rx.push(0x1, 0);
    rx.push(0x2, 10);
    EXPECT_EQ(rx.pending(), 2u);
    // 500 us later a fresh word starts; the fragment is discarded.
    std::optional<std::uint16_t> got;
    for (auto x : nibble_serialize(0xbeef))
        got = rx.push(x, 500);
    EXPECT_EQ(got, 0xbeef);
    EXPECT_EQ(rx.framing_errors(), 1u);
}

TEST(WireTap, CsvFormat)
{
    WireTap tap;
    tap.record(12, "chip_out", 0x0800);
    tap.record(13, "encoder", 0xa000);
    std::ostringstream os;
    tap.write_csv(os);
    EXPECT_EQ(os.str(), "t_us,direction,payload_hex\n12,chip_out,0x0800\n13,encoder,0xa000\n");
}

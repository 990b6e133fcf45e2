#include <gtest/gtest.h>

#include <sstream>

#include "wtarm/angle_selector.hpp"
#include "wtarm/rng.hpp"

using namespace wtarm;

namespace {

struct Row
{
    int cluster;
    NeuronId lo, hi;
    double angle;
    int spike_ref;
    std::uint16_t position;
};

// Command table, transcribed independently of the library.
constexpr Row kExpected[12] = {
    {1, 1, 8, 0.0, 0, 32768},       {2, 10, 17, 10.4, 32, 34086},   {3, 19, 26, 20.8, 64, 35406},
    {4, 28, 35, 31.2, 96, 36724},   {5, 37, 44, 41.6, 128, 38044},  {6, 46, 53, 52.0, 160, 39362},
    {7, 55, 62, 62.4, 192, 40682},  {8, 64, 71, 72.8, 224, 42000},  {9, 73, 80, 83.2, 256, 43320},
    {10, 82, 89, 93.6, 288, 44638}, {11, 91, 98, 104.0, 320, 45958}, {12, 100, 107, 114.4, 352, 47276},
};

std::optional<int> brute_classify(NeuronId id)
{
    for (const auto& r : kExpected)
        if (id >= r.lo && id <= r.hi)
            return r.cluster;
    return std::nullopt;
}

} // namespace

TEST(MapAngle, ReproducesEveryTableRow)
{
    for (const auto& r : kExpected) {
        const auto& e = map_angle(r.cluster);
        EXPECT_EQ(e.cluster, r.cluster);
        EXPECT_EQ(e.id_lo, r.lo);
        EXPECT_EQ(e.id_hi, r.hi);
        EXPECT_EQ(e.angle_deg, r.angle);
        EXPECT_EQ(e.spike_ref, r.spike_ref);
        EXPECT_EQ(e.position16, r.position);
    }
}

TEST(MapAngle, SpotRows)
{
    EXPECT_EQ(map_angle(1).spike_ref, 0);
    EXPECT_EQ(map_angle(1).position16, 32768);
    EXPECT_EQ(map_angle(8).spike_ref, 224);
    EXPECT_EQ(map_angle(8).position16, 42000);
    EXPECT_EQ(map_angle(8).angle_deg, 72.8);
    EXPECT_EQ(map_angle(12).position16, 47276);
    EXPECT_EQ(map_angle(12).angle_deg, 114.4);
}

TEST(MapAngle, OutOfRangeThrows)
{
    EXPECT_THROW(map_angle(0), ValidationError);
    EXPECT_THROW(map_angle(13), ValidationError);
}

TEST(Classify, ExhaustiveOverChipIds)
{
    for (NeuronId id = 0; id < kMaxNeurons; ++id)
        ASSERT_EQ(classify(id), brute_classify(id)) << id;
    EXPECT_EQ(classify(0), std::nullopt);
    EXPECT_EQ(classify(9), std::nullopt);
    EXPECT_EQ(classify(110), std::nullopt);
}

TEST(HistoryFilter, SelectsAtThreshold)
{
    HistoryFilter f(50);
    for (int i = 0; i < 49; ++i)
        EXPECT_FALSE(f.step(5));
    EXPECT_EQ(f.step(5), 5);
    for (int k = 1; k <= 12; ++k)
        EXPECT_EQ(f.counter(k), 0);
}

TEST(HistoryFilter, ResetClearsEveryCounter)
{
    HistoryFilter f(3);
    f.step(1);
    f.step(2);
    f.step(2);
    f.step(4);
    EXPECT_EQ(f.step(2), 2);
    for (int k = 1; k <= 12; ++k)
        EXPECT_EQ(f.counter(k), 0);
}

TEST(HistoryFilter, RepeatSelectionIsSuppressed)
{
    HistoryFilter f(2);
    f.step(3);
    EXPECT_EQ(f.step(3), 3);
    f.step(3);
    EXPECT_FALSE(f.step(3));
    EXPECT_EQ(f.counter(3), 0);
    EXPECT_EQ(f.last_selected(), 3);
}

TEST(HistoryFilter, ThresholdOneFollowsEveryChange)
{
    HistoryFilter f(1);
    EXPECT_EQ(f.step(1), 1);
    EXPECT_EQ(f.step(2), 2);
    EXPECT_EQ(f.step(1), 1);
    EXPECT_FALSE(f.step(1));
}

TEST(HistoryFilter, CommandsAreAtLeastThresholdEventsApart)
{
    Rng rng(9);
    for (int theta : {1, 5, 50}) {
        HistoryFilter f(theta);
        std::size_t last = 0;
        bool any = false;
        for (std::size_t i = 1; i <= 20000; ++i) {
            const int k = 1 + static_cast<int>(rng.below(rng.below(4) == 0 ? 12 : 3));
            if (f.step(k)) {
                if (any) {
                    ASSERT_GE(i - last, static_cast<std::size_t>(theta));
                }
                last = i;
                any = true;
            }
        }
        EXPECT_TRUE(any);
    }
}

TEST(HistoryFilter, MatchesBruteForceReplay)
{
    Rng rng(5);
    std::vector<int> stream(5000);
    for (auto& k : stream)
        k = 1 + static_cast<int>(rng.below(4));
    const int theta = 7;

    std::vector<std::pair<std::size_t, int>> expected;
    std::array<int, 13> c{};
    int last = 0;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        if (++c[stream[i]] >= theta) {
            c.fill(0);
            if (stream[i] != last)
                expected.emplace_back(i, stream[i]);
            last = stream[i];
        }
    }

    HistoryFilter f(theta);
    std::vector<std::pair<std::size_t, int>> got;
    for (std::size_t i = 0; i < stream.size(); ++i)
        if (auto s = f.step(stream[i]))
            got.emplace_back(i, *s);
    EXPECT_EQ(got, expected);
}

TEST(HistoryFilter, LeakDrainsIdleCounters)
{
    HistoryFilter f(5, 1000);
    f.step(2, 0);
    f.step(2, 100);
    f.step(2, 200);
    EXPECT_EQ(f.counter(2), 3);
    f.step(4, 2500);
    EXPECT_EQ(f.counter(2), 1);
    EXPECT_EQ(f.counter(4), 1);
}

TEST(HistoryFilter, RejectsBadConfig)
{
    EXPECT_THROW(HistoryFilter(0), ConfigError);
    EXPECT_THROW(HistoryFilter(5, -1), ConfigError);
    HistoryFilter f;
    EXPECT_THROW(f.step(13), ValidationError);
}

TEST(IsiFilter, SingleClusterSelectedOnSecondEvent)
{
    IsiFilter f;
    EXPECT_FALSE(f.step(6, 1000));
    EXPECT_EQ(f.step(6, 5000), 6);
}

TEST(IsiFilter, FasterClusterWins)
{
    IsiFilter f;
    std::optional<int> sel;
    for (Micros t = 0; t <= 200000; t += 1000) {
        if (t % 10000 == 0)
            if (auto s = f.step(1, t))
                sel = s;
        if (t % 20000 == 5000)
            if (auto s = f.step(2, t))
                sel = s;
    }
    EXPECT_EQ(f.last_selected(), 1);
    EXPECT_EQ(sel, 1);
}

TEST(IsiFilter, EqualIntervalsGoToLowestIndex)
{
    IsiFilter f;
    f.step(9, 0);
    f.step(4, 0);
    f.step(9, 1000);
    EXPECT_EQ(f.last_selected(), 9);
    EXPECT_EQ(f.step(4, 1000), 4);
}

TEST(IsiFilter, SameTimestampVolleyIsOneEvent)
{
    IsiFilter f;
    f.step(3, 100);
    EXPECT_FALSE(f.step(3, 100));
    EXPECT_FALSE(f.last_selected());
    EXPECT_EQ(f.step(3, 600), 3);
}

TEST(AngleSelector, ModesAgreeOnSteadyDominantCluster)
{
    for (auto mode : {FilterMode::integrate_fire, FilterMode::isi}) {
        AngleSelector sel({mode, 50, 0});
        Rng rng(3);
        std::optional<int> last;
        for (Micros t = 0; t < 2'000'000; t += 100) {
            const bool dominant = rng.below(10) != 0;
            const NeuronId id = dominant ? 64 + static_cast<NeuronId>(rng.below(8)) : 10;
            if (rng.below(dominant ? 1 : 10) == 0)
                if (auto s = sel.on_event(id, t))
                    last = s;
        }
        EXPECT_EQ(last, 8) << (mode == FilterMode::isi ? "isi" : "if");
    }
}

TEST(AngleSelector, DiscardsUnmappedIds)
{
    AngleSelector sel({FilterMode::integrate_fire, 1, 0});
    EXPECT_FALSE(sel.on_event(110, 0));
    EXPECT_FALSE(sel.on_event(0, 0));
    EXPECT_EQ(sel.accepted_events(), 0u);
    EXPECT_EQ(sel.on_event(12, 0), 2);
    EXPECT_EQ(sel.accepted_events(), 1u);
}

TEST(CommandLog, CsvFormat)
{
    std::ostringstream os;
    write_command_csv(os, {{2053700, 2, 51}, {4050200, 3, 102}});
    EXPECT_EQ(os.str(), "t_us,cluster,angle_deg,spike_ref,position16\n2053700,2,10.4,32,34086\n4050200,3,20.8,64,35406\n");
}

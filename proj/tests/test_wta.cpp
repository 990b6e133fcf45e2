#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "wtarm/angle_selector.hpp"
#include "wtarm/wta.hpp"

using namespace wtarm;

namespace {

SpikeTrace synthetic(Micros duration, std::initializer_list<std::pair<NeuronId, double>> rates, std::uint64_t seed = 1)
{
    SpikeTrace tr;
    tr.duration = duration;
    std::uint64_t s = seed;
    for (auto [id, hz] : rates) {
        auto ev = poisson_generator(hz, 0, duration, ++s, id);
        tr.events.insert(tr.events.end(), ev.begin(), ev.end());
    }
    std::sort(tr.events.begin(), tr.events.end());
    return tr;
}

SpikeTrace drive(const WtaNetwork& w, std::vector<std::tuple<int, Micros, Micros>> phases, Micros duration,
                 double rate = 300.0)
{
    std::vector<SpikeEvent> in;
    std::uint64_t seed = 100;
    for (auto [k, t0, t1] : phases) {
        auto ev = poisson_generator(rate, t0, t1, ++seed, WtaNetwork::input_line(k));
        in.insert(in.end(), ev.begin(), ev.end());
    }
    std::sort(in.begin(), in.end());
    return run(w.network, in, duration);
}

} // namespace

TEST(ClusterLayout, ReproducesTableIdRanges)
{
    const ClusterLayout layout = WtaConfig{}.layout();
    for (const auto& row : kAngleTable) {
        EXPECT_EQ(layout.first(row.cluster), row.id_lo);
        EXPECT_EQ(layout.last(row.cluster), row.id_hi);
    }
    for (NeuronId id = 0; id < 200; ++id)
        EXPECT_EQ(layout.cluster_of(id), classify(id)) << id;
}

TEST(BuildWta, DefaultNetworkRespectsChipCaps)
{
    const auto w = build_wta({});
    EXPECT_LE(w.network.size(), kMaxNeurons);
    EXPECT_EQ(w.inh_first, 109u);
    EXPECT_EQ(w.n_inh, 16);
    for (std::size_t core = 0; core < kNumCores; ++core)
        EXPECT_LE(w.network.core_population(core), kNeuronsPerCore);
    for (NeuronId id = 0; id < w.network.size(); ++id) {
        EXPECT_LE(w.network.synapses(id).size(), kMaxSynapsesPerNeuron);
        for (const auto& s : w.network.synapses(id))
            EXPECT_LE(s.weight_code, kMaxWeightCode);
    }
    // 96 cluster neurons x 8 projections spread evenly over 16 pool neurons.
    for (int j = 0; j < 16; ++j)
        EXPECT_EQ(w.network.synapses(w.inh_first + j).size(), 48u);
    // Cluster neuron: 1 input + 7 recurrent + 16 inhibitory.
    EXPECT_EQ(w.network.synapses(w.layout.first(5)).size(), 24u);
    // Gap ids carry no synapses.
    EXPECT_TRUE(w.network.synapses(9).empty());
}

TEST(BuildWta, DefaultWeightCodes)
{
    const WtaConfig c;
    EXPECT_EQ(c.w_input.code, 8);
    EXPECT_EQ(c.w_exc_exc.code, 6);
    EXPECT_EQ(c.w_exc_inh.code, 7);
    EXPECT_EQ(c.w_inh_exc.code, 10);
}

TEST(BuildWta, NoAutapsesAndInClusterOnlyExcitation)
{
    const auto w = build_wta({});
    for (int k = 1; k <= 12; ++k) {
        for (NeuronId post = w.layout.first(k); post <= w.layout.last(k); ++post) {
            for (const auto& s : w.network.synapses(post)) {
                if (s.source != SourceKind::neuron || s.branch != Branch::excitatory)
                    continue;
                EXPECT_NE(s.pre_id, post);
                EXPECT_EQ(w.layout.cluster_of(s.pre_id), k);
            }
        }
    }
}

TEST(BuildWta, TooSmallPoolOverflowsFanIn)
{
    WtaConfig c;
    c.n_inh = 4;
    try {
        build_wta(c);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("64"), std::string::npos);
    }
}

TEST(BuildWta, ConnectivityIsSeedDeterministic)
{
    WtaConfig a, b, c;
    c.seed = 99;
    auto fan = [](const WtaNetwork& w) {
        std::vector<NeuronId> pre;
        for (int j = 0; j < w.n_inh; ++j)
            for (const auto& s : w.network.synapses(w.inh_first + j))
                pre.push_back(s.pre_id);
        return pre;
    };
    EXPECT_EQ(fan(build_wta(a)), fan(build_wta(b)));
    EXPECT_NE(fan(build_wta(a)), fan(build_wta(c)));
}

TEST(WtaConfig, RejectsOversizedLayouts)
{
    WtaConfig c;
    c.n_clusters = 120;
    EXPECT_THROW(c.validate(), ConfigError);
    WtaConfig d;
    d.w_input.code = 16;
    EXPECT_THROW(d.validate(), ConfigError);
    WtaConfig e;
    e.stride = 4;
    EXPECT_THROW(e.validate(), ConfigError);
}

TEST(Winner, EmptyTraceHasNoWinner)
{
    SpikeTrace tr;
    tr.duration = ms_to_us(100);
    EXPECT_EQ(winner(tr, 0, tr.duration, WtaConfig{}.layout()), std::nullopt);
}

TEST(Winner, SoleActiveClusterWins)
{
    const auto tr = synthetic(ms_to_us(500), {{19, 100}, {20, 100}, {21, 100}});
    EXPECT_EQ(winner(tr, 0, tr.duration, WtaConfig{}.layout()), 3);
}

TEST(Winner, TieHasNoWinner)
{
    SpikeTrace tr;
    tr.duration = ms_to_us(100);
    for (Micros t = 0; t < tr.duration; t += 1000) {
        tr.events.push_back({t, 1});
        tr.events.push_back({t, 10});
    }
    EXPECT_EQ(winner(tr, 0, tr.duration, WtaConfig{}.layout()), std::nullopt);
}

TEST(Winner, DominanceRatioAndFloor)
{
    const auto layout = WtaConfig{}.layout();
    SpikeTrace tr;
    tr.duration = ms_to_us(1000);
    // Cluster 2: 100 spikes, cluster 5: 25 spikes -> ratio 4 < 5.
    for (int i = 0; i < 100; ++i)
        tr.events.push_back({i * 10000, 10});
    for (int i = 0; i < 25; ++i)
        tr.events.push_back({i * 40000 + 1, 37});
    std::sort(tr.events.begin(), tr.events.end());
    EXPECT_EQ(winner(tr, 0, tr.duration, layout), std::nullopt);
    EXPECT_EQ(winner(tr, 0, tr.duration, layout, {3.0, 10.0}), 2);
    // 100 spikes / (8 neurons * 1 s) = 12.5 Hz: clears a 10 Hz floor, not a 20 Hz one.
    EXPECT_EQ(winner(tr, 0, tr.duration, layout, {3.0, 20.0}), std::nullopt);
}

TEST(Winner, InhibitoryAndGapIdsAreIgnored)
{
    const auto tr = synthetic(ms_to_us(500), {{9, 500}, {110, 500}, {1, 200}});
    EXPECT_EQ(winner(tr, 0, tr.duration, WtaConfig{}.layout()), 1);
}

TEST(Winner, WindowOutsideTraceThrows)
{
    SpikeTrace tr;
    tr.duration = ms_to_us(100);
    const auto layout = WtaConfig{}.layout();
    EXPECT_THROW(winner(tr, 0, ms_to_us(200), layout), ValidationError);
    EXPECT_THROW(winner(tr, 50, 50, layout), ValidationError);
    EXPECT_THROW(winner(tr, -10, 50, layout), ValidationError);
}

TEST(Transitions, ConstantActivityHasNone)
{
    const auto tr = synthetic(ms_to_us(1000), {{19, 100}, {20, 100}});
    const auto layout = WtaConfig{}.layout();
    EXPECT_TRUE(transitions(tr, ms_to_us(50), layout).empty());
    const auto first = first_winner(tr, ms_to_us(50), layout);
    ASSERT_TRUE(first);
    EXPECT_EQ(first->new_cluster, 3);
    EXPECT_FALSE(first->prev_cluster);
}

TEST(Transitions, AlternatingClustersAlternate)
{
    SpikeTrace tr;
    tr.duration = ms_to_us(1000);
    for (Micros t = 0; t < tr.duration; t += 500) {
        const bool first_half = (t / 100000) % 2 == 0;
        tr.events.push_back({t, first_half ? 10u : 28u});
    }
    const auto ts = transitions(tr, ms_to_us(50), WtaConfig{}.layout());
    ASSERT_EQ(ts.size(), 9u);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        EXPECT_EQ(ts[i].new_cluster, i % 2 == 0 ? 4 : 2);
        EXPECT_EQ(ts[i].prev_cluster, i % 2 == 0 ? 2 : 4);
        EXPECT_EQ(ts[i].t, ms_to_us(100) * static_cast<Micros>(i + 1) + ms_to_us(50));
    }
    EXPECT_THROW(transitions(tr, 0, WtaConfig{}.layout()), ValidationError);
}

TEST(Transitions, CsvFormat)
{
    const std::vector<WinnerTransition> ts{{2100000, 1, 2}, {4100000, 2, 3}};
    std::ostringstream os;
    write_transitions_csv(os, ts);
    EXPECT_EQ(os.str(), "t_us,prev,new\n2100000,1,2\n4100000,2,3\n");
}

TEST(WtaDynamics, StimulatedClusterDominatesEveryOther)
{
    const auto w = build_wta({});
    const auto tr = drive(w, {{5, 0, ms_to_us(1000)}}, ms_to_us(1000));
    const auto counts = cluster_counts(tr.events, ms_to_us(300), ms_to_us(1000), w.layout);
    for (int k = 1; k <= 12; ++k)
        if (k != 5) {
            EXPECT_GE(counts[5], 5 * counts[k]) << "cluster " << k;
        }
    const double rate = static_cast<double>(counts[5]) / (8 * 0.7);
    EXPECT_GE(rate, 50.0);
    EXPECT_LE(rate, 150.0) << rate;
}

TEST(WtaDynamics, TakeoverWithinHalfASecond)
{
    const auto w = build_wta({});
    const auto tr = drive(w, {{3, 0, ms_to_us(1000)}, {4, ms_to_us(1000), ms_to_us(2000)}}, ms_to_us(2000));
    std::optional<Micros> takeover;
    for (Micros t = ms_to_us(1000); t + ms_to_us(50) <= ms_to_us(2000); t += ms_to_us(10)) {
        if (winner(tr, t, t + ms_to_us(50), w.layout) == 4) {
            takeover = t + ms_to_us(50) - ms_to_us(1000);
            break;
        }
    }
    ASSERT_TRUE(takeover);
    EXPECT_LT(*takeover, ms_to_us(500));
    // The incumbent falls below the activity floor.
    const auto counts = cluster_counts(tr.events, ms_to_us(1500), ms_to_us(2000), w.layout);
    EXPECT_LT(static_cast<double>(counts[3]) / (8 * 0.5), 10.0);
}

TEST(WtaDynamics, ActivityPersistsAfterInputRemoval)
{
    const auto w = build_wta({});
    const auto tr = drive(w, {{7, 0, ms_to_us(500)}}, ms_to_us(800));
    EXPECT_EQ(winner(tr, ms_to_us(600), ms_to_us(700), w.layout), 7);
}

TEST(WtaDynamics, SingleClusterSustainsUnderInput)
{
    WtaConfig c;
    c.n_clusters = 1;
    const auto w = build_wta(c);
    const auto tr = drive(w, {{1, 0, ms_to_us(500)}}, ms_to_us(500));
    EXPECT_EQ(winner(tr, ms_to_us(200), ms_to_us(500), w.layout), 1);
}

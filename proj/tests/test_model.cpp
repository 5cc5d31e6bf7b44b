#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "dcis/model.hpp"
#include "dcis/rng.hpp"

using namespace dcis;

namespace {

std::array<double, 3> logits_for_probs(double p1, double p2, double p3) {
    return {std::log(p1), std::log(p2), std::log(p3)};
}

BackboneConfig tiny_backbone() {
    BackboneConfig b;
    b.input_size_px = 64;
    b.block_widths = {4, 8, 8, 8, 8};
    b.trunk_units = 16;
    return b;
}

nn::Tensor random_input(int size, Rng& rng) {
    nn::Tensor t(3, size, size);
    for (auto& v : t.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

LesionRecord batch_lesion(const std::string& id, int grade) {
    const ObserverGrades obs{Grade(grade), Grade(grade), Grade(grade)};
    return LesionRecord{id, "P_" + id, "x.png",
                        {{0, 0}, {10, 0}, {10, 10}, {0, 10}},
                        0.88, obs, consensus_of(obs)};
}

}  // namespace

TEST_CASE("backbone config validation") {
    BackboneConfig b;
    b.architecture = BackboneConfig::Arch::densenet121;
    CHECK_THROWS_AS(b.validate(), CapabilityError);

    b = BackboneConfig{};
    b.input_size_px = 100;  // not a multiple of 32
    CHECK_THROWS_AS(b.validate(), ValidationError);

    b = BackboneConfig{};
    CHECK_NOTHROW(b.validate());
}

TEST_CASE("train config validation ties the balanced batch shape together") {
    TrainConfig t;
    CHECK_NOTHROW(t.validate());
    t.batch_size = 10;  // 4 * 3 != 10
    CHECK_THROWS_AS(t.validate(), ValidationError);
    t = TrainConfig{};
    t.momentum = 1.0;
    CHECK_THROWS_AS(t.validate(), ValidationError);
}

TEST_CASE("softmax sums to one and argmax ties break toward the lower grade") {
    const auto p = softmax3({0.0, 0.0, 0.0});
    CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(argmax_category({0.0, 0.0, 0.0}) == 1);
    CHECK(argmax_category({0.1, 0.7, 0.7}) == 2);
    CHECK(argmax_category({0.1, 0.2, 0.7}) == 3);
    CHECK(predicted_grade({5.0, 1.0, 1.0}).value() == 1);
}

TEST_CASE("ordinal loss worked examples") {
    // correct argmax: plain cross-entropy
    CHECK(ordinal_ce_loss(logits_for_probs(0.5, 0.3, 0.2), 1) ==
          doctest::Approx(-std::log(0.5)).epsilon(1e-12));
    // two grades off: multiplier 3
    CHECK(ordinal_ce_loss(logits_for_probs(0.1, 0.2, 0.7), 1) ==
          doctest::Approx(3.0 * -std::log(0.1)).epsilon(1e-12));
    // confident and correct: loss goes to zero
    CHECK(ordinal_ce_loss({50.0, 0.0, 0.0}, 1) < 1e-12);
    // non-finite logits are rejected
    CHECK_THROWS_AS(ordinal_ce_loss({std::nan(""), 0.0, 0.0}, 1), ValidationError);
    CHECK_THROWS_AS(ordinal_ce_loss({0.0, 0.0, 0.0}, 4), ValidationError);
}

TEST_CASE("ordinal loss dominates plain cross-entropy, equality iff argmax correct") {
    Rng rng(70);
    for (int i = 0; i < 500; ++i) {
        const std::array<double, 3> z{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
        const int truth = static_cast<int>(rng.uniform_int(1, 3));
        const double plain = -std::log(softmax3(z)[truth - 1]);
        const double ordinal = ordinal_ce_loss(z, truth);
        CHECK(ordinal >= plain - 1e-15);
        if (argmax_category(z) == truth)
            CHECK(ordinal == doctest::Approx(plain));
        else
            CHECK(ordinal > plain);
    }
}

TEST_CASE("loss is non-decreasing in the argmax distance for a fixed true probability") {
    // p[true] identical in both, argmax one vs two grades away
    const double one_off = ordinal_ce_loss(logits_for_probs(0.3, 0.5, 0.2), 1);
    const double two_off = ordinal_ce_loss(logits_for_probs(0.3, 0.2, 0.5), 1);
    CHECK(one_off == doctest::Approx(2.0 * -std::log(0.3)));
    CHECK(two_off == doctest::Approx(3.0 * -std::log(0.3)));
    CHECK(two_off > one_off);
}

TEST_CASE("analytic gradient matches central finite differences with the multiplier frozen") {
    Rng rng(71);
    double max_rel_err = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::array<double, 3> z{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
        const int truth = static_cast<int>(rng.uniform_int(1, 3));

        std::array<double, 3> grad{};
        const double loss = ordinal_ce_loss_grad(z, truth, grad);
        const double m = std::abs(argmax_category(z) - truth) + 1;

        // the implemented loss at the base point equals m * CE there
        CHECK(loss == doctest::Approx(m * -std::log(softmax3(z)[truth - 1])).epsilon(1e-12));

        // oracle: finite differences of m * CE with m held constant
        const double h = 1e-4;
        for (int d = 0; d < 3; ++d) {
            auto zp = z, zm = z;
            zp[d] += h;
            zm[d] -= h;
            const double fp = m * -std::log(softmax3(zp)[truth - 1]);
            const double fm = m * -std::log(softmax3(zm)[truth - 1]);
            const double fd = (fp - fm) / (2.0 * h);
            const double denom = std::max({std::abs(fd), std::abs(grad[d]), 1e-8});
            max_rel_err = std::max(max_rel_err, std::abs(fd - grad[d]) / denom);
        }
    }
    CHECK(max_rel_err < 1e-4);
}

TEST_CASE("combined loss: baseline reduction is bit-identical to the grade head") {
    Rng rng(72);
    TrainConfig dual;
    TrainConfig baseline;
    baseline.dual_target = false;
    for (int i = 0; i < 200; ++i) {
        DualHeadOutputs out;
        for (int d = 0; d < 3; ++d) {
            out.grade_logits[d] = rng.uniform(-5, 5);
            out.agreement_logits[d] = rng.uniform(-5, 5);
        }
        const ConsensusLabel label = consensus_of(ObserverGrades{
            Grade(static_cast<int>(rng.uniform_int(1, 3))),
            Grade(static_cast<int>(rng.uniform_int(1, 3))),
            Grade(static_cast<int>(rng.uniform_int(1, 3)))});

        const double grade_only = ordinal_ce_loss(out.grade_logits, label.consensus.value());
        CHECK(combined_loss(out, label, baseline) == grade_only);  // bitwise

        TrainConfig zero_lambda;
        zero_lambda.agreement_loss_weight = 0.0;
        CHECK(combined_loss(out, label, zero_lambda) == doctest::Approx(grade_only));

        CHECK(combined_loss(out, label, dual) >= grade_only);
    }
}

TEST_CASE("combined loss pins the tie-break: uniform heads, consensus 2, agreement 3") {
    DualHeadOutputs out;  // zero logits = uniform softmax on both heads
    const ConsensusLabel label{Grade(2), 3};
    TrainConfig config;
    // argmax ties toward category 1: grade multiplier 2, agreement multiplier 3
    CHECK(combined_loss(out, label, config) == doctest::Approx(5.0 * std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("zero-weight network produces zero logits and uniform probabilities") {
    DualHeadNet net(tiny_backbone());
    for (auto* p : net.params()) std::fill(p->value.begin(), p->value.end(), 0.0f);
    Rng rng(73);
    const auto input = random_input(64, rng);
    const auto out = net.forward(input);
    for (int i = 0; i < 3; ++i) {
        CHECK(out.grade_logits[i] == 0.0);
        CHECK(out.agreement_logits[i] == 0.0);
    }
    const auto p = softmax3(out.grade_logits);
    CHECK(p[0] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("forward is a pure function of weights and input") {
    DualHeadNet net(tiny_backbone());
    Rng init(74);
    net.init_params(init);
    Rng rng(75);
    const auto input = random_input(64, rng);
    const auto a = net.forward(input);
    const auto b = net.forward(input);
    CHECK(a.grade_logits == b.grade_logits);
    CHECK(a.agreement_logits == b.agreement_logits);
}

TEST_CASE("forward rejects mismatched input sizes") {
    DualHeadNet net(tiny_backbone());
    nn::Tensor wrong(3, 32, 32);
    CHECK_THROWS_WITH_AS(net.forward(wrong), doctest::Contains("64"), ValidationError);
}

TEST_CASE("checkpoint round-trip reproduces forward outputs exactly") {
    DualHeadNet net(tiny_backbone());
    Rng init(76);
    net.init_params(init);

    Checkpoint ckpt = snapshot_net(net);
    ckpt.config_json = "{}";
    ckpt.epoch = 7;
    ckpt.best_val_kappa = 0.625;
    ckpt.norm = NormStats{{0.8, 0.7, 0.75}, {0.1, 0.12, 0.09}};
    ckpt.rng_state = Rng(5).save_state();

    const auto path = std::filesystem::temp_directory_path() / "dcis_ckpt_roundtrip.bin";
    save_checkpoint(ckpt, path);
    const auto loaded = load_checkpoint(path);
    std::filesystem::remove(path);

    CHECK(loaded.epoch == 7);
    CHECK(loaded.best_val_kappa == 0.625);
    CHECK(loaded.norm.mean == ckpt.norm.mean);
    CHECK(loaded.rng_state == ckpt.rng_state);
    CHECK(loaded.backbone.input_size_px == 64);

    DualHeadNet net2(loaded.backbone);
    load_into_net(loaded, net2);
    Rng rng(77);
    const auto input = random_input(64, rng);
    const auto a = net.forward(input);
    const auto b = net2.forward(input);
    CHECK(a.grade_logits == b.grade_logits);  // bitwise
    CHECK(a.agreement_logits == b.agreement_logits);
}

TEST_CASE("checkpoint loading rejects mismatched networks") {
    DualHeadNet net(tiny_backbone());
    Rng init(78);
    net.init_params(init);
    Checkpoint ckpt = snapshot_net(net);

    BackboneConfig other = tiny_backbone();
    other.block_widths = {8, 8, 8, 8, 8};
    DualHeadNet net2(other);
    CHECK_THROWS_AS(load_into_net(ckpt, net2), ValidationError);
}

TEST_CASE("balanced batches hold exactly per_grade of each class") {
    std::vector<LesionRecord> storage;
    for (int i = 0; i < 100; ++i) storage.push_back(batch_lesion("g1_" + std::to_string(i), 1));
    for (int i = 0; i < 10; ++i) storage.push_back(batch_lesion("g2_" + std::to_string(i), 2));
    for (int i = 0; i < 10; ++i) storage.push_back(batch_lesion("g3_" + std::to_string(i), 3));
    std::vector<const LesionRecord*> lesions;
    for (const auto& l : storage) lesions.push_back(&l);

    BalancedBatchStream stream(lesions, 4, Rng(80));
    std::map<std::string, int> appearances;
    for (int b = 0; b < 500; ++b) {
        const auto batch = stream.next_batch();
        REQUIRE(batch.size() == 12);
        int hist[3] = {0, 0, 0};
        for (const auto* l : batch) ++hist[l->label.consensus.index()];
        CHECK(hist[0] == 4);
        CHECK(hist[1] == 4);
        CHECK(hist[2] == 4);
        if (b < 10)
            for (const auto* l : batch) ++appearances[l->lesion_id];
    }

    // after 10 batches: each of the 10 grade-2 lesions appeared exactly 4 times,
    // while no grade-1 lesion repeated before all 100 appeared once
    int g1_repeats = 0;
    for (const auto& [id, n] : appearances) {
        if (id.rfind("g2_", 0) == 0) CHECK(n >= 3);
        if (id.rfind("g1_", 0) == 0 && n > 1) ++g1_repeats;
    }
    CHECK(g1_repeats == 0);
}

TEST_CASE("exact-fit batches are a permutation of the whole set") {
    std::vector<LesionRecord> storage;
    for (int g = 1; g <= 3; ++g)
        for (int i = 0; i < 4; ++i)
            storage.push_back(batch_lesion("g" + std::to_string(g) + "_" + std::to_string(i), g));
    std::vector<const LesionRecord*> lesions;
    for (const auto& l : storage) lesions.push_back(&l);

    BalancedBatchStream stream(lesions, 4, Rng(81));
    const auto batch = stream.next_batch();
    std::set<std::string> ids;
    for (const auto* l : batch) ids.insert(l->lesion_id);
    CHECK(ids.size() == 12);
}

TEST_CASE("batch stream is deterministic and fails fast on an empty class") {
    std::vector<LesionRecord> storage;
    for (int i = 0; i < 5; ++i) storage.push_back(batch_lesion("a" + std::to_string(i), 1));
    for (int i = 0; i < 5; ++i) storage.push_back(batch_lesion("b" + std::to_string(i), 2));
    std::vector<const LesionRecord*> lesions;
    for (const auto& l : storage) lesions.push_back(&l);
    CHECK_THROWS_AS(BalancedBatchStream(lesions, 4, Rng(82)), ValidationError);

    for (int i = 0; i < 5; ++i) storage.push_back(batch_lesion("c" + std::to_string(i), 3));
    lesions.clear();
    for (const auto& l : storage) lesions.push_back(&l);

    BalancedBatchStream s1(lesions, 4, Rng(83));
    BalancedBatchStream s2(lesions, 4, Rng(83));
    for (int b = 0; b < 20; ++b) {
        const auto b1 = s1.next_batch();
        const auto b2 = s2.next_batch();
        for (std::size_t i = 0; i < b1.size(); ++i) CHECK(b1[i]->lesion_id == b2[i]->lesion_id);
    }
}

TEST_CASE("patch normalization standardizes per channel") {
    Image img = Image::filled(4, 4, 255, 0, 127);
    NormStats norm{{0.5, 0.5, 0.5}, {0.25, 0.25, 0.25}};
    const auto t = patch_to_tensor(img, norm);
    CHECK(t.v[0] == doctest::Approx((1.0 - 0.5) / 0.25));          // R plane
    CHECK(t.v[16] == doctest::Approx((0.0 - 0.5) / 0.25));         // G plane
    CHECK(t.v[32] == doctest::Approx((127.0 / 255.0 - 0.5) / 0.25));  // B plane
}

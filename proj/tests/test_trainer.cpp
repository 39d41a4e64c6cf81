#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "protosurv/trainer.hpp"

using namespace protosurv;

namespace {

// Desk-scale dataset shared by the trainer tests.
struct Fixture {
    Dataset train_set;
    Dataset val_set;
    EngineConfig cfg;
    TrainOptions opts;
};

Fixture make_fixture(int per_class = 40, int train_per_class = 30, int epochs = 3) {
    SynthSpec spec;
    spec.samples_per_class = per_class;
    spec.seed = 515;
    Dataset ds = generate_synthetic(spec);
    bin_times(ds, 4);
    Fixture f;
    std::tie(f.train_set, f.val_set) = split_by_class_blocks(ds, 4, train_per_class, 515);
    f.cfg.fused_dim = 8;
    f.cfg.typical_per_class = 10;
    f.cfg.wandering_per_class = 3;
    f.opts.epochs = epochs;
    f.opts.batch_size = 16;
    f.opts.seed = 515;
    return f;
}

}  // namespace

TEST_CASE("zero epochs returns the initialized state", "[trainer]") {
    Fixture f = make_fixture(40, 30, 0);
    const TrainState state = train(f.train_set, f.val_set, f.cfg, f.opts);
    REQUIRE(state.library.version == 1);
    REQUIRE(state.update_reports.empty());
    REQUIRE(state.step_losses.empty());
    REQUIRE(state.history.size() == 1);

    // encoder is exactly the seeded initialization
    std::mt19937_64 rng(f.opts.seed);
    const FusionEncoder fresh =
        FusionEncoder::init(f.train_set.input_dim(), f.cfg.fused_dim, rng, true);
    REQUIRE(state.encoder.weights == fresh.weights);
    REQUIRE(state.encoder.bias == fresh.bias);

    // and the library equals a direct init over the encoded features
    const auto encoded = encode_dataset(fresh, f.train_set);
    const PrototypeLibrary direct = init_library(
        class_sets_from_encoded(encoded, f.cfg.num_classes), f.cfg, config_hash(f.cfg), 0);
    REQUIRE(emit_library(state.library) == emit_library(direct));
}

TEST_CASE("frozen encoder isolates the library dynamics", "[trainer]") {
    Fixture f = make_fixture(40, 30, 4);
    f.opts.freeze_encoder = true;
    const TrainState state = train(f.train_set, f.val_set, f.cfg, f.opts);

    // encoder untouched
    std::mt19937_64 rng(f.opts.seed);
    const FusionEncoder fresh =
        FusionEncoder::init(f.train_set.input_dim(), f.cfg.fused_dim, rng, true);
    REQUIRE(state.encoder.weights == fresh.weights);

    // prototypes still moved, and every merge obeys the EMA displacement law
    REQUIRE(state.update_reports.size() == 4);
    int merges = 0;
    for (const auto& report : state.update_reports)
        for (const auto& m : report.merges) {
            merges += 1;
            REQUIRE_THAT(m.displacement,
                         Catch::Matchers::WithinAbs(
                             (1.0 - f.cfg.ema_decay) * m.source_distance, 1e-9));
        }
    REQUIRE(merges > 0);
    REQUIRE(state.library.version == 5);  // init + 4 updates
}

TEST_CASE("training is bitwise deterministic given the seed", "[trainer]") {
    Fixture f = make_fixture(40, 30, 3);
    const TrainState a = train(f.train_set, f.val_set, f.cfg, f.opts);
    const TrainState b = train(f.train_set, f.val_set, f.cfg, f.opts);

    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        REQUIRE(a.history[i].mean_loss == b.history[i].mean_loss);
        REQUIRE(a.history[i].train_c_index == b.history[i].train_c_index);
        REQUIRE(a.history[i].val_c_index == b.history[i].val_c_index);
    }
    REQUIRE(emit_library(a.library) == emit_library(b.library));
    REQUIRE(emit_encoder(a.encoder) == emit_encoder(b.encoder));

    TrainOptions other = f.opts;
    other.seed += 1;
    const TrainState c = train(f.train_set, f.val_set, f.cfg, other);
    REQUIRE(emit_library(c.library) != emit_library(a.library));
}

TEST_CASE("library version never decreases across epochs", "[trainer]") {
    Fixture f = make_fixture(40, 30, 5);
    f.cfg.update_period_epochs = 2;  // updates at epochs 2 and 4 only
    const TrainState state = train(f.train_set, f.val_set, f.cfg, f.opts);
    REQUIRE(state.update_reports.size() == 2);
    REQUIRE(state.library.version == 3);
    std::uint64_t prev = 0;
    for (const auto& r : state.update_reports) {
        REQUIRE(r.new_version > prev);
        prev = r.new_version;
    }
}

TEST_CASE("training loss stays finite at every step", "[trainer]") {
    Fixture f = make_fixture(40, 30, 4);
    const TrainState state = train(f.train_set, f.val_set, f.cfg, f.opts);
    REQUIRE_FALSE(state.step_losses.empty());
    for (const auto& s : state.step_losses) {
        REQUIRE(std::isfinite(s.total));
        REQUIRE(s.total >= 0.0);
        REQUIRE(std::isfinite(s.prototypes));
        REQUIRE(std::isfinite(s.survival));
    }
}

TEST_CASE("end-to-end encoder gradients match finite differences", "[trainer]") {
    Fixture f = make_fixture(24, 18, 0);
    f.cfg.fused_dim = 6;
    f.cfg.typical_per_class = 5;
    f.cfg.wandering_per_class = 2;
    const TrainState state = train(f.train_set, f.val_set, f.cfg, f.opts);

    std::vector<const FeatureRecord*> batch;
    for (std::size_t i = 0; i < 8; ++i) batch.push_back(&f.train_set.records[i]);
    const auto base =
        compute_batch_gradients(state.encoder, state.library, f.cfg, batch);

    auto loss_at = [&](const FusionEncoder& enc) {
        return compute_batch_gradients(enc, state.library, f.cfg, batch).breakdown.total;
    };

    std::mt19937_64 rng(929);
    const double h = 1e-5;
    int probes = 0;
    while (probes < 25) {
        FusionEncoder enc_p = state.encoder, enc_m = state.encoder;
        const bool weight_probe = probes % 3 != 2;
        std::size_t idx;
        double analytic;
        if (weight_probe) {
            idx = rng() % state.encoder.weights.size();
            enc_p.weights[idx] += h;
            enc_m.weights[idx] -= h;
            analytic = base.grad_w[idx];
        } else {
            idx = rng() % state.encoder.bias.size();
            enc_p.bias[idx] += h;
            enc_m.bias[idx] -= h;
            analytic = base.grad_b[idx];
        }
        const double fd = (loss_at(enc_p) - loss_at(enc_m)) / (2 * h);
        // absolute guard below the FD noise floor, relative bound above it
        if (std::fabs(analytic - fd) > 1e-9) {
            const double denom = std::max(std::fabs(analytic), std::fabs(fd));
            REQUIRE(std::fabs(analytic - fd) / denom < 1e-4);
        }
        probes += 1;
    }
}

TEST_CASE("variant full is the identity switch", "[trainer]") {
    Fixture f = make_fixture(40, 30, 2);
    const TrainState plain = train(f.train_set, f.val_set, f.cfg, f.opts);
    const TrainState full =
        ablation_run(f.train_set, f.val_set, f.cfg, f.opts, AblationVariant::full);
    REQUIRE(emit_library(plain.library) == emit_library(full.library));
    REQUIRE(emit_encoder(plain.encoder) == emit_encoder(full.encoder));
    for (std::size_t i = 0; i < plain.history.size(); ++i)
        REQUIRE(plain.history[i].val_c_index == full.history[i].val_c_index);
}

TEST_CASE("no_wandering variant validates with empty wandering banks", "[trainer]") {
    Fixture f = make_fixture(40, 30, 2);
    const TrainState state = ablation_run(f.train_set, f.val_set, f.cfg, f.opts,
                                          AblationVariant::no_wandering);
    REQUIRE(state.library.wandering_per_class == 0);
    REQUIRE(validate_library(state.library).ok());
    for (int c = 0; c < state.library.num_classes; ++c) {
        REQUIRE(state.library.wandering[static_cast<std::size_t>(c)].empty());
        // matching rows use typical entries only
        const auto protos = effective_set(state.library, c);
        REQUIRE(static_cast<int>(protos.size()) == f.cfg.typical_per_class);
    }
}

TEST_CASE("basic_update variant swaps the evolution strategy", "[trainer]") {
    Fixture f = make_fixture(40, 30, 3);
    const TrainState state = ablation_run(f.train_set, f.val_set, f.cfg, f.opts,
                                          AblationVariant::basic_update);
    for (const auto& report : state.update_reports) REQUIRE(report.total_merged() == 0);
}

TEST_CASE("all six variants produce a comparison table", "[trainer]") {
    Fixture f = make_fixture(32, 24, 1);
    const auto rows = run_all_ablations(f.train_set, f.val_set, f.cfg, f.opts);
    REQUIRE(rows.size() == 6);
    for (const auto& r : rows) {
        REQUIRE(std::isfinite(r.val_c_index));
        REQUIRE(r.val_c_index >= 0.0);
        REQUIRE(r.val_c_index <= 1.0);
    }
    REQUIRE(std::string(to_string(rows[0].variant)) == "full");
    REQUIRE(std::string(to_string(rows[5].variant)) == "proto_only");
}

TEST_CASE("encoder output is unit norm under the encoding policy", "[trainer]") {
    Fixture f = make_fixture(40, 30, 0);
    const TrainState state = train(f.train_set, f.val_set, f.cfg, f.opts);
    for (const auto& r : f.val_set.records) {
        const Vec fused = state.encoder.encode(r);
        double sq = 0.0;
        for (double v : fused) sq += v * v;
        REQUIRE_THAT(std::sqrt(sq), Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("encoder round-trips through its file format", "[trainer]") {
    std::mt19937_64 rng(823);
    const FusionEncoder enc = FusionEncoder::init(14, 8, rng, true);
    const auto path = std::filesystem::temp_directory_path() / "protosurv_enc_rt.txt";
    write_encoder(path, enc);
    const FusionEncoder loaded = read_encoder(path);
    REQUIRE(loaded.weights == enc.weights);
    REQUIRE(loaded.bias == enc.bias);
    REQUIRE(loaded.input_dim == enc.input_dim);
    REQUIRE(loaded.normalize_output == enc.normalize_output);
    REQUIRE(emit_encoder(loaded) == emit_encoder(enc));
    std::filesystem::remove(path);
}

TEST_CASE("train rejects unbinned datasets and bad configs", "[trainer]") {
    Fixture f = make_fixture(24, 18, 1);
    Dataset unbinned = f.train_set;
    unbinned.bin_edges.clear();
    REQUIRE_THROWS_AS(train(unbinned, f.val_set, f.cfg, f.opts), DataError);

    EngineConfig bad = f.cfg;
    bad.ema_decay = 0.9;
    REQUIRE_THROWS_AS(train(f.train_set, f.val_set, bad, f.opts), DataError);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bottleneck/game.hpp"
#include "bottleneck/random.hpp"

using namespace bottleneck;

namespace {

const Profile GG{Move::go, Move::go}, GN{Move::go, Move::nogo}, NG{Move::nogo, Move::go},
    NN{Move::nogo, Move::nogo};

bool has(const std::vector<Profile>& s, Profile p) { return std::find(s.begin(), s.end(), p) != s.end(); }

// Brute force over every profile and unilateral deviation, written out
// independently of the library.
std::vector<Profile> nash_oracle(const BimatrixGame& g, bool weak) {
    std::vector<Profile> out;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            const auto [pr, pc] = g.payoffs[r][c];
            const double dr = g.payoffs[1 - r][c].first, dc = g.payoffs[r][1 - c].second;
            if (weak ? (dr <= pr && dc <= pc) : (dr < pr && dc < pc))
                out.push_back({static_cast<Move>(r), static_cast<Move>(c)});
        }
    return out;
}

} // namespace

TEST_CASE("closed game payoffs") {
    const auto g = build_go_nogo_game(false);
    CHECK(g.at(GG) == std::pair{1.0, 1.0});
    CHECK(g.at(GN) == std::pair{2.0, 2.0});
    CHECK(g.at(NG) == std::pair{2.0, 2.0});
    CHECK(g.at(NN) == std::pair{0.0, 0.0});
}

TEST_CASE("open game payoffs") {
    const auto g = build_go_nogo_game(true);
    CHECK(g.at(GG) == std::pair{1.0, 1.0});
    CHECK(g.at(GN) == std::pair{0.0, 2.0});
    CHECK(g.at(NG) == std::pair{2.0, 0.0});
    CHECK(g.at(NN) == std::pair{0.0, 0.0});
}

TEST_CASE("closed game: equilibria coincide with the social optimum") {
    const auto g = build_go_nogo_game(false);
    const std::vector<Profile> expect{GN, NG};
    CHECK(pure_nash(g, true) == expect);
    CHECK(pure_nash(g, false) == expect);
    CHECK(social_optimum(g) == expect);
    CHECK_FALSE(has(pure_nash(g, true), NN));
}

TEST_CASE("open game: a weak equilibrium outside the social optimum") {
    const auto g = build_go_nogo_game(true);
    const auto weak = pure_nash(g, true);
    CHECK(weak == std::vector<Profile>{GN, NG, NN});
    CHECK(pure_nash(g, false).empty());
    const auto opt = social_optimum(g);
    CHECK(opt == std::vector<Profile>{GG, GN, NG});
    for (Profile p : opt) CHECK(g.at(p).first + g.at(p).second == 2.0);
    CHECK(has(weak, NN));
    CHECK_FALSE(has(opt, NN));
}

TEST_CASE("constant and zero games") {
    BimatrixGame c;
    for (auto& row : c.payoffs)
        for (auto& cell : row) cell = {3.0, 3.0};
    CHECK(pure_nash(c, true).size() == 4);
    CHECK(pure_nash(c, false).empty());
    CHECK(social_optimum(BimatrixGame{}).size() == 4);
}

TEST_CASE("positive scaling leaves both sets unchanged") {
    for (bool open : {false, true}) {
        const auto g = build_go_nogo_game(open);
        for (double k : {0.001, 0.5, 3.0, 1e6}) {
            const auto s = g.scaled(k);
            CHECK(pure_nash(s, true) == pure_nash(g, true));
            CHECK(pure_nash(s, false) == pure_nash(g, false));
            CHECK(social_optimum(s) == social_optimum(g));
        }
    }
}

TEST_CASE("enumeration agrees with a brute-force oracle on random games") {
    Rng rng(17);
    for (int t = 0; t < 500; ++t) {
        BimatrixGame g;
        for (auto& row : g.payoffs)
            for (auto& cell : row)
                cell = {std::floor(rng.uniform(0.0, 4.0)), std::floor(rng.uniform(0.0, 4.0))};
        CHECK(pure_nash(g, true) == nash_oracle(g, true));
        CHECK(pure_nash(g, false) == nash_oracle(g, false));
    }
}

TEST_CASE("describe names every profile set") {
    const auto text = describe(build_go_nogo_game(true), "open");
    CHECK(text.find("(NoGo,NoGo)") != std::string::npos);
    CHECK(text.find("open") == 0);
}

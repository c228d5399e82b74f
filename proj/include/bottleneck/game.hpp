#pragma once

#include <array>
#include <compare>
#include <string>
#include <utility>
#include <vector>

namespace bottleneck {

enum class Move { go = 0, nogo = 1 };

struct Profile {
    Move row = Move::go;
    Move col = Move::go;

    auto operator<=>(const Profile&) const = default;
};

/// Two players, two moves. payoffs[row][col] = (row payoff, column payoff).
struct BimatrixGame {
    std::array<std::array<std::pair<double, double>, 2>, 2> payoffs{};

    const std::pair<double, double>& at(Profile p) const {
        return payoffs[static_cast<int>(p.row)][static_cast<int>(p.col)];
    }
    BimatrixGame scaled(double k) const;
};

/// One-step go/no-go game at the bottleneck entrance. Closed network: the
/// reward is shared, so a lone goer pays both players 2. Open network: the
/// goer leaves and collects nothing.
BimatrixGame build_go_nogo_game(bool open_network);

/// Pure equilibria. weak: no unilateral deviation strictly gains.
/// Strict: every unilateral deviation strictly loses.
std::vector<Profile> pure_nash(const BimatrixGame& g, bool weak);

/// Profiles maximising the payoff sum.
std::vector<Profile> social_optimum(const BimatrixGame& g);

std::string to_string(Move m);
std::string to_string(Profile p);
/// Payoff table plus equilibria and optima, for the CLI.
std::string describe(const BimatrixGame& g, const std::string& title);

} // namespace bottleneck

#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "agentrec/corpus.hpp"
#include "agentrec/policy.hpp"
#include "agentrec/toolbox.hpp"
#include "agentrec/trajectory.hpp"

namespace agentrec {

struct EpisodeLimits {
    std::size_t max_turns = kMaxTurns;
    std::chrono::milliseconds max_wall_time{120'000};
    std::size_t max_prompt_tokens = 32'768;

    void validate() const;
};

/// Rough prompt size: one token per four characters.
std::size_t estimate_tokens(std::span<const Message> messages);

/// Replaces the oldest tool observations with "[truncated]" until the prompt
/// fits `max_tokens`. System and user messages are never touched.
/// Returns false if the prompt still does not fit.
bool truncate_observations(std::vector<Message>& messages, std::size_t max_tokens);

inline constexpr std::string_view kTruncatedMarker = "[truncated]";

/// Seed of repeat `repeat` of `case_id`; independent of scheduling.
std::uint64_t episode_seed(std::uint64_t seed, const std::string& case_id, std::size_t repeat);

/// Runs one episode. Policy misbehavior never throws; it ends the episode
/// with format_error, limit_exceeded or policy_error.
Trajectory run_episode(Policy& policy, const Toolbox& toolbox, const CandidateSet& candidates,
                       const EpisodeLimits& limits = {}, const SamplingParams& params = {},
                       std::uint64_t seed = 0, std::size_t repeat = 0);

struct BatchOptions {
    EpisodeLimits limits;
    SamplingParams params;
    std::size_t parallelism = 4;
    std::size_t repeats = 1;
    std::uint64_t seed = 0;
};

/// Runs every case `repeats` times. Result i*repeats + r is repeat r of case i,
/// seeded by episode_seed(seed, case_id, r).
std::vector<Trajectory> run_batch(Policy& policy, const Toolbox& toolbox, std::span<const CandidateSet> cases,
                                  const BatchOptions& options = {});

/// Observations of user-centric tools that reference `held_out` the way tool
/// payloads name items ("item_id: X" or "item X"). Bare numbers are not matched:
/// MovieLens ids collide with ratings and positions. Item lookups are excluded,
/// since the held-out item is a candidate the policy may inspect.
std::vector<std::size_t> leaking_steps(const Trajectory& trajectory, const ItemId& held_out);

}  // namespace agentrec

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gnndt/env/sim.hpp"

namespace gnndt {

enum class PolicyTag { random, bau, cafap, optimal, model };

std::string to_string(PolicyTag tag);
PolicyTag parse_policy_tag(const std::string& name);

/// Values i.i.d. uniform on [-1, 1] for every charger; the environment applies the mask.
std::vector<double> random_policy(int num_chargers, std::mt19937_64& rng);

/// a = min(1, need / (p_max dt)) for every connected EV with need = max(0, e* - e). Never discharges.
std::vector<double> cafap_policy(const Scenario& scenario, const SimState& state);

/// Round-robin business-as-usual charging. Starting at `pointer`, visits chargers cyclically and grants
/// need-capped full power while the projected total stays within p*(t) and every group limit; the first
/// EV that does not fit ends the pass. `pointer` advances by one charger per call.
std::vector<double> bau_round_robin(const Scenario& scenario, const SimState& state, int& pointer);

/// Behavior policy driven through an episode by `record_trajectory`.
class Policy {
public:
    virtual ~Policy() = default;
    virtual PolicyTag tag() const = 0;
    virtual void reset(const Scenario& scenario) {}
    virtual std::vector<double> act(const Scenario& scenario, const SimState& state) = 0;
    virtual void observe(const StepOutcome& outcome) {}
};

class RandomPolicy final : public Policy {
public:
    explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
    PolicyTag tag() const override { return PolicyTag::random; }
    std::vector<double> act(const Scenario& scenario, const SimState&) override {
        return random_policy(scenario.num_chargers(), rng_);
    }

private:
    std::mt19937_64 rng_;
};

class CafapPolicy final : public Policy {
public:
    PolicyTag tag() const override { return PolicyTag::cafap; }
    std::vector<double> act(const Scenario& scenario, const SimState& state) override {
        return cafap_policy(scenario, state);
    }
};

class BauPolicy final : public Policy {
public:
    PolicyTag tag() const override { return PolicyTag::bau; }
    void reset(const Scenario&) override { pointer_ = 0; }
    std::vector<double> act(const Scenario& scenario, const SimState& state) override {
        return bau_round_robin(scenario, state, pointer_);
    }

private:
    int pointer_ = 0;
};

/// Replays a precomputed T x num_chargers plan (e.g. an oracle solution).
class PlanPolicy final : public Policy {
public:
    PlanPolicy(std::vector<std::vector<double>> plan, PolicyTag tag) : plan_(std::move(plan)), tag_(tag) {}
    PolicyTag tag() const override { return tag_; }
    std::vector<double> act(const Scenario& scenario, const SimState& state) override;

private:
    std::vector<std::vector<double>> plan_;
    PolicyTag tag_;
};

}  // namespace gnndt

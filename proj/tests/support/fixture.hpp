// Shared desk-scale fixture: a small world with a flow trained once per
// test binary. Kept deliberately tiny; distribution quality only needs to
// be good enough to exercise the samplers.
#pragma once

#include "flowplan/environment.hpp"
#include "flowplan/flow_model.hpp"
#include "flowplan/guidance.hpp"

namespace flowplan::testing {

struct SamplerFixture {
  MazeWorld world;
  Dataset dataset;
  VectorFieldModel flow;
  DoubleIntegrator dynamics;
  GuidanceConfig guidance;

  static const SamplerFixture& get() {
    static SamplerFixture fixture = [] {
      MazeWorld world = MazeWorld::desk_default();
      const int horizon = 8;
      Dataset dataset = generate_expert(world, 400, horizon, 123);

      VectorFieldConfig cfg;
      cfg.hidden_sizes = {64, 64};
      cfg.time_embed_dim = 16;
      cfg.seed = 5;
      VectorFieldModel flow(dataset.layout, cfg);

      FlowTrainOptions opts;
      opts.epochs = 60;
      opts.batch_size = 32;
      opts.learning_rate = 1e-3;
      opts.momentum = 0.9;
      opts.seed = 5;
      PriorSpec prior{dataset.layout, ConditioningMask::none()};
      train(flow, dataset.trajectories, prior, opts);

      GuidanceConfig guidance;
      guidance.c = 0.5;
      guidance.t0 = 0.6;
      guidance.ode_steps = 50;
      return SamplerFixture{std::move(world), std::move(dataset), std::move(flow),
                            DoubleIntegrator{}, guidance};
    }();
    return fixture;
  }
};

}  // namespace flowplan::testing

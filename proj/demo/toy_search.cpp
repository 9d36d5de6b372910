// Toy visual search end to end: foveate a synthetic scene, imitate a scripted searcher, and
// compare the learned scanpaths with the expert's.
//
//   toy_search [out_dir] [iterations]

#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "ffm/env.hpp"
#include "ffm/irl/trainer.hpp"
#include "ffm/metrics/scores.hpp"
#include "ffm/png_io.hpp"
#include "ffm/synthetic.hpp"

using namespace ffm;

int main(int argc, char** argv) {
  const std::filesystem::path out = argc > 1 ? argv[1] : "toy_search_out";
  const std::size_t iterations = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 1000;
  std::filesystem::create_directories(out);

  const auto ds = synthetic::make_toy_dataset();

  // What the searcher sees after each of the expert's fixations on the first image.
  const auto& first = ds.trials.front();
  for (std::size_t k = 1; k <= first.scanpath.size(); ++k) {
    const std::span<const Fixation> seen(first.scanpath.fixations.data(), k);
    const auto view = foveate_image(ds.images.front().pixels, seen, fov::RetinaParams{});
    write_png(out / ("foveated_" + std::to_string(k) + ".png"), tensor_to_raster(view));
  }

  nn::ModelConfig mc;
  mc.ffm_channels = 8;
  mc.head_channels = 8;
  mc.num_classes = 3;
  mc.termination_hidden = 32;
  mc.tasks = ds.tasks;
  irl::TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch_size = 4;
  tc.iterations = iterations;
  tc.value_term = irl::ValueTerm::kExpert;
  const irl::TrainingData data{ds.trials, synthetic::toy_pyramids(ds), ds.objects};
  irl::Trainer trainer(mc, tc, data);
  const auto log = trainer.run([](const irl::LogRow& r) {
    if (r.step % 100 == 0) std::printf("step %5llu  L_irl %8.4f  total %8.4f\n", (unsigned long long)r.step, r.l_irl, r.total);
  });
  irl::write_log(out / "train_log.csv", log);

  double ss = 0;
  for (const auto& t : ds.trials) {
    const auto pred = env::rollout(trainer.model(), trainer.params(), data.pyramids->load(t.image_id), t, {});
    const double s = metrics::sequence_score(pred, t.scanpath);
    ss += s;
    std::printf("%-10s %-11s expert:", t.image_id.c_str(), t.task.c_str());
    for (const auto& f : t.scanpath.fixations) std::printf(" (%.0f,%.0f)", f.x, f.y);
    std::printf("\n%22s model: ", "");
    for (const auto& f : pred.fixations) std::printf(" (%.0f,%.0f)", f.x, f.y);
    std::printf("   SS %.3f\n", s);
  }
  std::printf("mean SS %.3f; foveated views and training log in %s\n", ss / ds.trials.size(), out.c_str());
}

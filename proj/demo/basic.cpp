// Fits the two-stage square-root-law estimator to a simulated Gaussian sample
// and compares it with the classical estimator on a few points.
#include <cstdio>

#include "vbkde/vbkde.hpp"

int main() {
    using namespace vbkde;
    DensityCatalog catalog;
    const DensityModel& gauss = catalog.get("gauss1");

    const std::size_t n = 20000;
    const SampleSet samples(gauss.draw(n, derive_seed(7, 0, 0)), 1);
    const auto kernel = make_default_profile(1);
    const auto clip = ClippingSpec::mckay_quintic(0.1);
    const auto schedule = schedule_for(n, 1, Mode::h4);

    const auto grid = EvalGrid::uniform_1d(-3.0, 3.0, 13);
    const auto adaptive = real_mckay(samples, kernel, schedule, clip, grid);
    const auto classical = classical_kde(samples, kernel, schedule.h1, grid);

    std::printf("%8s %12s %12s %12s\n", "t", "true", "classical", "adaptive");
    for (std::size_t q = 0; q < grid.size(); ++q) {
        const double t = grid.point(q)[0];
        std::printf("%8.2f %12.6f %12.6f %12.6f\n", t, gauss.pdf1(t), classical.values[q], adaptive.values[q]);
    }
}

#pragma once

#include <snlab/activation.hpp>
#include <snlab/certificates.hpp>
#include <snlab/errors.hpp>
#include <snlab/harness/config.hpp>
#include <snlab/harness/data.hpp>
#include <snlab/harness/experiment.hpp>
#include <snlab/harness/report.hpp>
#include <snlab/harness/sweep.hpp>
#include <snlab/harness/training.hpp>
#include <snlab/hermite.hpp>
#include <snlab/matrix.hpp>
#include <snlab/optimizers.hpp>
#include <snlab/random.hpp>
#include <snlab/shallow_net.hpp>
#include <snlab/spectral.hpp>

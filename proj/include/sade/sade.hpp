#pragma once

#include "sade/attention.hpp"
#include "sade/autodiff.hpp"
#include "sade/config.hpp"
#include "sade/dataset.hpp"
#include "sade/experiments.hpp"
#include "sade/gradcheck.hpp"
#include "sade/graph.hpp"
#include "sade/matrix.hpp"
#include "sade/metrics.hpp"
#include "sade/model.hpp"
#include "sade/params.hpp"
#include "sade/synthetic.hpp"
#include "sade/trainer.hpp"

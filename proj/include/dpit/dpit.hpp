#pragma once

#include "dpit/error.hpp"
#include "dpit/tensor.hpp"
#include "dpit/autograd.hpp"
#include "dpit/ops.hpp"
#include "dpit/grad_check.hpp"
#include "dpit/params.hpp"
#include "dpit/skeleton.hpp"
#include "dpit/geometry.hpp"
#include "dpit/dataset.hpp"
#include "dpit/image_io.hpp"
#include "dpit/scene.hpp"
#include "dpit/backbones.hpp"
#include "dpit/tokenizer.hpp"
#include "dpit/encoder.hpp"
#include "dpit/heatmap.hpp"
#include "dpit/model_config.hpp"
#include "dpit/model.hpp"
#include "dpit/augment.hpp"
#include "dpit/optim.hpp"
#include "dpit/train.hpp"
#include "dpit/checkpoint.hpp"
#include "dpit/metrics.hpp"
#include "dpit/evaluate.hpp"
#include "dpit/model_check.hpp"
#include "dpit/run_config.hpp"
#include "dpit/session.hpp"

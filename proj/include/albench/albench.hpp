#pragma once

#include "albench/adapter/client.hpp"
#include "albench/adapter/compliance.hpp"
#include "albench/adapter/protocol.hpp"
#include "albench/adapter/server.hpp"
#include "albench/annotation.hpp"
#include "albench/core.hpp"
#include "albench/dataset_io.hpp"
#include "albench/factory.hpp"
#include "albench/learners/builtin.hpp"
#include "albench/learners/checkpoint.hpp"
#include "albench/orchestrator.hpp"
#include "albench/strategies.hpp"

#pragma once

// Everything except the network client (gridsentry/http_client.hpp).

#include "gridsentry/ber.hpp"
#include "gridsentry/codec.hpp"
#include "gridsentry/dataset_io.hpp"
#include "gridsentry/engine.hpp"
#include "gridsentry/error.hpp"
#include "gridsentry/keyvalue.hpp"
#include "gridsentry/llm.hpp"
#include "gridsentry/metrics.hpp"
#include "gridsentry/pcap.hpp"
#include "gridsentry/records.hpp"
#include "gridsentry/rules.hpp"
#include "gridsentry/simulator.hpp"
#include "gridsentry/types.hpp"

/*
 * Reference ping firmware: configure the radio for SF7/125 kHz, then
 * transmit "ping" every 30 seconds and listen 5 seconds for an answer.
 *
 * Plain bare-metal style, no conditional compilation: the same source
 * builds for the simulation host and for an ARM target.
 */
#include "sim_hal.h"

#define PING_INTERVAL_MS 30000u
#define PONG_TIMEOUT_MS   5000u

static const sim_radio_config_t radio_config = {
    .frequency_hz     = 868100000u,
    .bandwidth_hz     = 125000u,
    .spreading_factor = 7u,
    .coding_rate      = 1u,
    .preamble_symbols = 8u,
    .iq_inverted      = 0u,
    .tx_power_dbm     = 14,
};

static const uint8_t ping_payload[4] = {'p', 'i', 'n', 'g'};

int firmware_main(void)
{
    uint8_t rx_buf[64];

    SIM_RadioConfigure(&radio_config);
    for (;;) {
        if (SIM_RadioTransmit(ping_payload, sizeof ping_payload) < 0) {
            /* Radio failure: back off one interval and retry. */
            HAL_Delay(PING_INTERVAL_MS);
            continue;
        }
        (void)SIM_RadioReceive(rx_buf, sizeof rx_buf, PONG_TIMEOUT_MS);
        HAL_Delay(PING_INTERVAL_MS);
    }
    return 0; /* not reached: the ping loop runs until shut down */
}

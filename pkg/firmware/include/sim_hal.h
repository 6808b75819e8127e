/*
 * HAL contract between firmware and the simulator (or real drivers).
 *
 * Fixed-width integer types throughout so the ABI is identical on a
 * 32-bit Cortex-M target and a 64-bit simulation host.  This header must
 * compile unchanged for both; firmware code includes it and links either
 * against real HAL/driver implementations (deployment) or against the
 * simulator's shims (simulation).
 */
#ifndef SIM_HAL_H
#define SIM_HAL_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct {
    uint32_t frequency_hz;
    uint32_t bandwidth_hz;      /* 125000, 250000 or 500000 */
    uint8_t  spreading_factor;  /* 7..12 */
    uint8_t  coding_rate;       /* 1..4 for 4/5..4/8 */
    uint8_t  preamble_symbols;
    uint8_t  iq_inverted;       /* 0 = normal, 1 = inverted */
    int8_t   tx_power_dbm;
} sim_radio_config_t;

/* Core timebase (STM32 HAL signatures). */
void     HAL_Delay(uint32_t ms);
uint32_t HAL_GetTick(void);

/* Radio access.  Transmit blocks for the full airtime and returns 0 on
 * success.  Receive blocks up to timeout_ms and returns the payload
 * length copied into buf, or -1 on timeout. */
void    SIM_RadioConfigure(const sim_radio_config_t *cfg);
int32_t SIM_RadioTransmit(const uint8_t *data, uint32_t len);
int32_t SIM_RadioReceive(uint8_t *buf, uint32_t max_len, uint32_t timeout_ms);

#ifdef __cplusplus
}
#endif

#endif /* SIM_HAL_H */

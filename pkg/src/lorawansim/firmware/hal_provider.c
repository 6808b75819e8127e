/*
 * HAL forwarding layer loaded into the simulator process with global
 * symbol visibility.  Firmware modules are built with unresolved HAL
 * imports; at dlopen time those imports bind to the functions below,
 * which forward every call through a vtable of function pointers that
 * the simulator fills in at runtime.
 */
#include <stdint.h>
#include <stddef.h>

typedef void     (*sim_hal_delay_fn)(uint32_t ms);
typedef uint32_t (*sim_hal_get_tick_fn)(void);
typedef void     (*sim_radio_configure_fn)(const void *cfg);
typedef int32_t  (*sim_radio_transmit_fn)(const uint8_t *data, uint32_t len);
typedef int32_t  (*sim_radio_receive_fn)(uint8_t *buf, uint32_t max_len,
                                         uint32_t timeout_ms);

typedef struct {
    sim_hal_delay_fn      delay;
    sim_hal_get_tick_fn   get_tick;
    sim_radio_configure_fn radio_configure;
    sim_radio_transmit_fn radio_transmit;
    sim_radio_receive_fn  radio_receive;
} sim_hal_vtable_t;

sim_hal_vtable_t sim_hal_vtable = {NULL, NULL, NULL, NULL, NULL};

void HAL_Delay(uint32_t ms)
{
    if (sim_hal_vtable.delay)
        sim_hal_vtable.delay(ms);
}

uint32_t HAL_GetTick(void)
{
    return sim_hal_vtable.get_tick ? sim_hal_vtable.get_tick() : 0u;
}

void SIM_RadioConfigure(const void *cfg)
{
    if (sim_hal_vtable.radio_configure)
        sim_hal_vtable.radio_configure(cfg);
}

int32_t SIM_RadioTransmit(const uint8_t *data, uint32_t len)
{
    return sim_hal_vtable.radio_transmit
        ? sim_hal_vtable.radio_transmit(data, len) : -1;
}

int32_t SIM_RadioReceive(uint8_t *buf, uint32_t max_len, uint32_t timeout_ms)
{
    return sim_hal_vtable.radio_receive
        ? sim_hal_vtable.radio_receive(buf, max_len, timeout_ms) : -1;
}

// meterpreter: decompiler fixture output
#include <windows.h>

int32_t main(void *arg)
{
    int32_t v1 = 0;
    if (stage_connect(arg) == 0) {
        return -1;
    }
    v1 = reflective_load(arg);
    return v1;
}

int32_t stage_connect(void *arg)
{
    int32_t v1 = 0;
    if (LoadLibraryA(arg) == 0) {
        return -1;
    }
    v1 = GetProcAddress(arg);
    return v1;
}

int32_t reflective_load(void *arg)
{
    int32_t v1 = 0;
    if (VirtualAlloc(arg) == 0) {
        return -1;
    }
    v1 = VirtualProtect(arg);
    if (CreateThread(arg) == 0) {
        return -1;
    }
    return v1;
}

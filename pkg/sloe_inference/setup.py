#!/usr/bin/env python
# setup.py
import subprocess
import sys
from pathlib import Path

ENV_KEYS = {
    'SLOE_CACHE_DIR': str(Path.home() / '.cache' / 'sloe_inference'),
    'SLOE_FRONTIER_PATH': '',
    'SLOE_LOG_LEVEL': 'INFO',
    'SLOE_JOBS': '1',
    'SLOE_CACHE': '1',
}


def write_env_file(env_file: Path, values: dict) -> None:
    """Записывает ключи SLOE_* в .env; пустые значения остаются закомментированными."""
    with open(env_file, "w", encoding="utf-8") as f:
        for key, value in values.items():
            if value:
                f.write(f"{key}={value}\n")
            else:
                f.write(f"# {key}=\n")


def setup_environment():
    """Настраивает окружение для библиотеки скорректированного вывода."""
    print("Настройка окружения для sloe_inference...")

    # Проверяем версию Python
    python_version = sys.version_info
    if python_version.major < 3 or (python_version.major == 3 and python_version.minor < 10):
        print("ОШИБКА: Требуется Python 3.10 или выше!")
        sys.exit(1)

    print(f"Обнаружена версия Python {python_version.major}.{python_version.minor}.{python_version.micro}")

    # Проверяем наличие pip
    try:
        subprocess.run([sys.executable, "-m", "pip", "--version"], check=True, stdout=subprocess.PIPE)
    except subprocess.CalledProcessError:
        print("ОШИБКА: pip не установлен или не работает!")
        sys.exit(1)

    # Устанавливаем зависимости
    requirements = Path(__file__).resolve().parent.parent / "requirements.txt"
    print(f"Установка зависимостей из {requirements}...")
    try:
        subprocess.run([sys.executable, "-m", "pip", "install", "-r", str(requirements)], check=True)
    except subprocess.CalledProcessError:
        print("ОШИБКА: Не удалось установить зависимости!")
        sys.exit(1)

    # Создаем файл .env, если он не существует
    env_file = Path(".env")
    if not env_file.exists():
        print("Создание файла .env...")
        values = dict(ENV_KEYS)
        jobs = input(f"Число рабочих потоков (по умолчанию {values['SLOE_JOBS']}): ").strip()
        if jobs:
            values['SLOE_JOBS'] = jobs
        write_env_file(env_file, values)
        print("Файл .env создан.")
    else:
        print("Файл .env уже существует.")

    with open(env_file, "r", encoding="utf-8") as f:
        env_content = f.read()
    missing = [key for key in ENV_KEYS if key not in env_content]
    if missing:
        print(f"ВНИМАНИЕ: в .env нет ключей {', '.join(missing)}; будут использованы значения по умолчанию.")

    # Таблица границы строится один раз и кэшируется
    answer = input("Построить таблицу границы разделимости сейчас? (y/n, по умолчанию: n): ").strip().lower()
    if answer == 'y':
        print("Построение таблицы границы (несколько минут)...")
        try:
            subprocess.run([sys.executable, "main.py", "frontier"], check=True,
                           cwd=Path(__file__).resolve().parent)
        except subprocess.CalledProcessError:
            print("ВНИМАНИЕ: таблица не построена; она будет построена при первом использовании.")

    print("\nНастройка окружения завершена!")
    print("Для подгонки модели выполните: python main.py fit data.csv --outcome y")
    print("Для просмотра справки выполните: python main.py --help")


if __name__ == "__main__":
    setup_environment()

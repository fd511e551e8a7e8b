import logging

from util.logger import get_logger


def test_file_and_console_handlers_are_not_duplicated(tmp_path, capsys):
    name = 'dse_test_logger'
    logger = get_logger(str(tmp_path), name=name, color=False)
    logger = get_logger(str(tmp_path), name=name, color=False)
    get_logger(name=name, color=False)
    names = [h.get_name() for h in logger.handlers]
    assert names.count('console') == 1
    assert sum((n or "").startswith('file:') for n in names) == 1

    logger.debug('only in the file')
    logger.warning('weights drifted')
    for h in logger.handlers:
        h.flush()
    err = capsys.readouterr().err
    assert 'weights drifted' in err and 'only in the file' not in err
    text = (tmp_path / 'log.txt').read_text()
    assert 'only in the file' in text and 'WARNING' in text


def test_level_from_environment(monkeypatch):
    monkeypatch.setenv('DSE_LOG_LEVEL', 'warning')
    logger = get_logger(name='dse_test_env_level', color=False)
    assert logger.level == logging.WARNING

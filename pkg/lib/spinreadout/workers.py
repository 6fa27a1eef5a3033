"""
Worker Pool
===========

Thread pool that runs independent experiment cells and returns their
results in submission order.

Example: evaluate three noise levels concurrently.

.. sourcecode:: python

    from spinreadout.workers import WorkerPool

    pool = WorkerPool(max_workers=4)
    for level in (0.5, 1.0, 2.0):
        pool.add_task(run_level, args=(level,), name='level')
    results = pool.run_concurrent()

Numeric kernels release the GIL, so threads give real parallelism. Every
task must own its random stream.
"""
import concurrent.futures
import functools
import logging
import os
import traceback

log = logging.getLogger(__name__)


def default_workers():
    return min(8, os.cpu_count() or 1)


class WorkerPool:
    """
    Ordered task pool.

    Tasks are queued with :meth:`add_task` and executed by
    :meth:`run_concurrent`. When a task fails the remaining tasks still run
    to completion, then the first failure (in submission order) is raised.
    """

    def __init__(self, max_workers=None, debug=False):
        self.max_workers = max(1, int(max_workers or default_workers()))
        self.__tasks = []
        self.debug = debug

    def __len__(self):
        return len(self.__tasks)

    def add_task(self, task, args=(), kwargs=None, name=None):
        """
        Queue a task.

        :param task: callable run in a worker thread
        :param tuple args: positional arguments
        :param dict kwargs: keyword arguments
        :param str name: label used in task ids (default: function name)
        """
        name = name or getattr(task, '__name__', 'task')
        task_id = 'task:{}:{}'.format(name, len(self.__tasks))
        self.__tasks.append((task_id, task, tuple(args), dict(kwargs or {})))
        return task_id

    def __run(self, task_id, task, args, kwargs):
        log.debug('{} - task started'.format(task_id))
        return task(*args, **kwargs)

    def __handle_task_result(self, task_id, future):
        if future.cancelled():
            log.debug('{} - task cancelled'.format(task_id))
            return
        ex = future.exception()
        if ex is not None:
            log.error('{} - task raised an exception: {}'.format(task_id, ex))
            if self.debug:
                log.debug(''.join(traceback.format_exception(type(ex), ex, ex.__traceback__)))
        else:
            log.debug('{} - task finished'.format(task_id))

    def run_concurrent(self, debug=None):
        """
        Run every queued task and clear the queue.

        :param bool debug: log full tracebacks of failing tasks
            (default: the flag given to the constructor)
        :return list: task results in submission order
        """
        if debug is not None:
            self.debug = debug
        tasks, self.__tasks = self.__tasks, []
        if not tasks:
            return []
        workers = min(self.max_workers, len(tasks))
        log.debug('Running {} tasks on {} threads'.format(len(tasks), workers))
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            futures = []
            for task_id, task, args, kwargs in tasks:
                future = executor.submit(self.__run, task_id, task, args, kwargs)
                future.add_done_callback(functools.partial(self.__handle_task_result, task_id))
                futures.append(future)
            concurrent.futures.wait(futures)
        for future in futures:
            if future.exception() is not None:
                raise future.exception()
        return [future.result() for future in futures]
